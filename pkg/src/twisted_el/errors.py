"""Exception types raised across the package."""


class TwistedELError(Exception):
    """Base class for all package errors."""


class InvalidArgument(TwistedELError, ValueError):
    pass


class SizeMismatch(TwistedELError, ValueError):
    pass


class AxisSingularity(TwistedELError, ValueError):
    pass


class UnitNormViolation(TwistedELError, ValueError):
    pass


class OutOfDomain(TwistedELError, ValueError):
    pass


class DegenerateFrame(TwistedELError, ArithmeticError):
    pass


class TangencyViolation(TwistedELError, ArithmeticError):
    pass


class NoConvergence(TwistedELError, ArithmeticError):
    """Modulation extraction failed; the decomposition has broken down."""


class StabilityFailure(TwistedELError, ArithmeticError):
    """A time step was rejected (renormalization correction too large)."""


class NaNDetected(TwistedELError, ArithmeticError):
    pass


class InsufficientWindow(TwistedELError, ValueError):
    pass


class InsufficientSamples(TwistedELError, ValueError):
    pass


class NonpositiveValue(TwistedELError, ValueError):
    pass


class EigensolverFailure(TwistedELError, ArithmeticError):
    pass


class ConfigError(TwistedELError, ValueError):
    """Configuration could not be parsed or failed validation."""
