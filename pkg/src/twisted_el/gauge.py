"""Tangent frame along the director profile and the gauge fields q, v built on it.

The frame e(r) is transported from the far field (where it equals e2) toward
the axis. Every vector quantity is first formed in R^3 and only then written in
the complex coordinates a + ib <-> a e + b (phi x e), so the gauge-invariant
magnitudes do not inherit frame errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrame, InvalidArgument, SizeMismatch, TangencyViolation
from .grid import RadialGrid
from .profiles import E2, E3, apply_R

UNIT_NORM_TOL = 1e-8


@dataclass(eq=False)
class GaugeFields:
    """Frame e (n, 3) and the complex fields q, v (and optionally S)."""

    e: np.ndarray
    q: np.ndarray
    v: np.ndarray
    q_vec: np.ndarray
    v_vec: np.ndarray
    lm_q: np.ndarray | None = None
    s: np.ndarray | None = None


def _check_phi(phi: np.ndarray, grid: RadialGrid) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[1] != 3:
        raise InvalidArgument("phi must have shape (n, 3)")
    if phi.shape[0] != grid.n:
        raise SizeMismatch(f"phi has {phi.shape[0]} nodes, grid has {grid.n}")
    return phi


def _rodrigues(axis: np.ndarray, cos_a: float, sin_a: float, v: np.ndarray) -> np.ndarray:
    return v * cos_a + np.cross(axis, v) * sin_a + axis * np.dot(axis, v) * (1.0 - cos_a)


def solve_frame(phi: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Unit tangent frame e with e = e2 at r_max and D_r e = 0.

    Between neighbouring nodes e is carried by the minimal rotation taking
    phi_{i+1} to phi_i (parallel transport along the connecting great circle),
    then re-projected onto the tangent plane at phi_i.
    """
    phi = _check_phi(phi, grid)
    n = grid.n
    e = np.empty_like(phi)
    start = E2 - np.dot(E2, phi[-1]) * phi[-1]
    norm = np.linalg.norm(start)
    if norm < 1e-8:
        raise DegenerateFrame("far-field director is parallel to e2")
    e[-1] = start / norm
    for i in range(n - 2, -1, -1):
        a, b = phi[i + 1], phi[i]
        cr = np.cross(a, b)
        s = np.linalg.norm(cr)
        c = float(np.dot(a, b))
        cur = e[i + 1]
        if s > 1e-15:
            cur = _rodrigues(cr / s, c, s, cur)
        elif c < 0.0:
            raise DegenerateFrame(f"antipodal neighbouring directors at node {i}")
        cur = cur - np.dot(cur, b) * b
        norm = np.linalg.norm(cur)
        if norm < 1e-8:
            raise DegenerateFrame(f"frame collapsed at node {i}")
        e[i] = cur / norm
    return e


def _to_complex(vecs: np.ndarray, phi: np.ndarray, e: np.ndarray) -> np.ndarray:
    j = np.cross(phi, e)
    return np.einsum("ij,ij->i", vecs, e) + 1j * np.einsum("ij,ij->i", vecs, j)


def _project(vecs: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return vecs - np.einsum("ij,ij->i", vecs, phi)[:, None] * phi


def _over_r(f: np.ndarray, r: np.ndarray) -> np.ndarray:
    """f / r with the axis value set to 0 (all fields divided here vanish faster than r)."""
    out = np.zeros_like(f)
    out[1:] = f[1:] / r[1:, None] if f.ndim == 2 else f[1:] / r[1:]
    return out


def q_vector(phi: np.ndarray, grid: RadialGrid, m: int) -> np.ndarray:
    """Tangent part of d_r phi - (m / r) phi x R phi."""
    phi = _check_phi(phi, grid)
    dev = np.max(np.abs(np.linalg.norm(phi, axis=1) - 1.0))
    if dev > UNIT_NORM_TOL:
        raise TangencyViolation(f"director deviates from unit length by {dev:.3e}")
    dphi = grid.d1_high @ phi
    twist = m * _over_r(np.cross(phi, apply_R(phi)), grid.nodes)
    return _project(dphi - twist, phi)


def v_vector(phi: np.ndarray) -> np.ndarray:
    """Tangent projection of e3: e3 - phi3 phi."""
    return E3[None, :] - phi[:, 2:3] * phi


def compute_q(phi: np.ndarray, e: np.ndarray, grid: RadialGrid, m: int) -> np.ndarray:
    return _to_complex(q_vector(phi, grid, m), phi, e)


def compute_v(phi: np.ndarray, e: np.ndarray) -> np.ndarray:
    return _to_complex(v_vector(phi), phi, e)


def apply_Lm_vector(q_vec: np.ndarray, phi: np.ndarray, grid: RadialGrid, m: int) -> np.ndarray:
    """(D_r + 1/r - m phi3 / r) q as a tangent vector field; 0 on the axis."""
    cov = _project(grid.d1_high @ q_vec, phi)
    return cov + _over_r(q_vec * (1.0 - m * phi[:, 2])[:, None], grid.nodes)


def compute_gauge(phi: np.ndarray, grid: RadialGrid, m: int, *, with_lm: bool = True) -> GaugeFields:
    """Frame plus q, v (and L_m q) for a director profile."""
    phi = _check_phi(phi, grid)
    e = solve_frame(phi, grid)
    qv = q_vector(phi, grid, m)
    vv = v_vector(phi)
    out = GaugeFields(e=e, q=_to_complex(qv, phi, e), v=_to_complex(vv, phi, e), q_vec=qv, v_vec=vv)
    if with_lm:
        out.lm_q = _to_complex(apply_Lm_vector(qv, phi, grid, m), phi, e)
    return out


def compute_S(
    phi: np.ndarray,
    gauge: GaugeFields,
    w: np.ndarray,
    v_vert: np.ndarray,
    grid: RadialGrid,
    m: int,
    mu: float,
) -> np.ndarray:
    """S(r) = int_r^inf <L_m q + mu^2 v phi3 + i v (m W / tau^2 + mu V), i (q + m v / tau)> dtau.

    Plain (unweighted) tail integral by the trapezoid rule from r_max inward.
    """
    r = grid.nodes
    lm_q = gauge.lm_q if gauge.lm_q is not None else _to_complex(apply_Lm_vector(gauge.q_vec, phi, grid, m), phi, gauge.e)
    w_over_r2 = np.zeros_like(r)
    w_over_r2[1:] = w[1:] / r[1:] ** 2
    left = lm_q + mu**2 * gauge.v * phi[:, 2] + 1j * gauge.v * (m * w_over_r2 + mu * v_vert)
    right = 1j * (gauge.q + m * _over_r(gauge.v, r))
    integrand = np.real(left * np.conj(right))
    integrand[0] = 0.0
    seg = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(r)
    tail = np.zeros_like(r)
    tail[:-1] = np.cumsum(seg[::-1])[::-1]
    return tail
