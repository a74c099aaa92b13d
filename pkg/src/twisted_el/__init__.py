"""Reduced m-equivariant twisted director/flow solver and verification tools."""

__version__ = "0.1.0"
