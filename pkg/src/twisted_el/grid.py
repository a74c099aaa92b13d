"""Radial mesh on [0, r_max]: node placement, quadrature against r dr, and
finite-difference operators that respect the axis r = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .errors import AxisSingularity, InvalidArgument, SizeMismatch

GRADINGS = ("uniform", "geometric-near-axis")

# fraction of nodes placed inside r < r_max / 20 by the graded mesh
_CORE_FRACTION = 0.25


@lru_cache(maxsize=None)
def _core_stretch() -> float:
    return brentq(lambda b: np.sinh(_CORE_FRACTION * b) / np.sinh(b) - 1.0 / 20.0, 0.1, 20.0)


@lru_cache(maxsize=None)
def _axis_stretch(n: int) -> float:
    # node 2 at r_max/200 keeps three nodes (0, 1, 2) inside r_max/100
    f = lambda b: np.sinh(2.0 * b / (n - 1)) / np.sinh(b) - 1.0 / 200.0
    if f(0.1) <= 0.0:
        return 0.1
    return brentq(f, 0.1, 60.0)


def stretch_parameter(n: int) -> float:
    """Stretching factor of the sinh map used by the graded mesh."""
    return max(_core_stretch(), _axis_stretch(n))


def _fd_weights(x0: float, x: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for the `order`-th derivative at x0 from points x."""
    k = len(x)
    dx = x - x0
    vander = np.vander(dx, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(vander, rhs)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Ordered radial nodes with quadrature weights for the measure r dr.

    ``weights[i]`` already contains the factor r: ``integrate_radial(f) =
    sum(weights * f)``, which is exact for piecewise-linear f.
    """

    nodes: np.ndarray
    weights: np.ndarray
    r_max: float
    grading: str = "uniform"
    stretch: float = field(default=0.0)

    @property
    def n(self) -> int:
        return self.nodes.size

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def axis_spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    def scaled(self, factor: float) -> "RadialGrid":
        """Grid with nodes multiplied by `factor` (e.g. r -> rho = r / sigma)."""
        factor = float(factor)
        if factor <= 0.0:
            raise InvalidArgument("scale factor must be positive")
        return RadialGrid(
            nodes=self.nodes * factor,
            weights=self.weights * factor**2,
            r_max=self.r_max * factor,
            grading=self.grading,
            stretch=self.stretch,
        )

    @cached_property
    def d1(self) -> sp.csr_matrix:
        return _derivative_matrix(self.nodes, 1)

    @cached_property
    def d1_high(self) -> sp.csr_matrix:
        """Five-point first derivative (fourth order on smooth meshes)."""
        return _derivative_matrix(self.nodes, 1, width=5)

    @cached_property
    def d2(self) -> sp.csr_matrix:
        return _derivative_matrix(self.nodes, 2)

    @cached_property
    def lap_plus(self) -> sp.csr_matrix:
        """d_rr + r^-1 d_r in conservative form, axis row = 2 d_rr (even extension)."""
        return _radial_laplacian_matrix(self.nodes, +1)

    @cached_property
    def lap_minus(self) -> sp.csr_matrix:
        """d_rr - r^-1 d_r in conservative form; axis row extrapolated."""
        return _radial_laplacian_matrix(self.nodes, -1)

    @cached_property
    def lap_plus_high(self) -> sp.csr_matrix:
        """Five-point d_rr + r^-1 d_r; axis row 2 f''(0) from the even extension."""
        return _radial_laplacian_high(self.nodes, +1)

    @cached_property
    def lap_minus_high(self) -> sp.csr_matrix:
        """Five-point d_rr - r^-1 d_r; the axis row is left empty (W(0) = 0 is imposed)."""
        return _radial_laplacian_high(self.nodes, -1)


def make_grid(r_max: float, n: int, grading: str = "uniform") -> RadialGrid:
    """Build a radial grid with `n` nodes on [0, r_max].

    The graded mesh uses r = r_max sinh(b xi) / sinh(b) on a uniform xi-mesh, a
    smooth map, so the three-point stencils stay second order.
    """
    if int(n) != n or n < 16:
        raise InvalidArgument(f"node count must be an integer >= 16, got {n!r}")
    n = int(n)
    r_max = float(r_max)
    if not np.isfinite(r_max) or r_max <= 0.0:
        raise InvalidArgument(f"r_max must be positive, got {r_max!r}")
    if grading not in GRADINGS:
        raise InvalidArgument(f"unknown grading {grading!r}; expected one of {GRADINGS}")

    xi = np.linspace(0.0, 1.0, n)
    if grading == "uniform":
        b = 0.0
        nodes = r_max * xi
    else:
        b = stretch_parameter(n)
        nodes = r_max * np.sinh(b * xi) / np.sinh(b)
    nodes[0] = 0.0
    nodes[-1] = r_max
    return RadialGrid(nodes=nodes, weights=_measure_weights(nodes), r_max=r_max, grading=grading, stretch=b)


def _measure_weights(nodes: np.ndarray) -> np.ndarray:
    # integral of each hat function against r dr
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    w = np.zeros_like(nodes)
    w[:-1] += h * (2.0 * a + b) / 6.0
    w[1:] += h * (a + 2.0 * b) / 6.0
    return w


def _check_size(f: np.ndarray, grid: RadialGrid) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[0] != grid.n:
        raise SizeMismatch(f"field has {f.shape[0]} values, grid has {grid.n} nodes")
    return f


def integrate_radial(f, grid: RadialGrid):
    """Approximate the integral of f against r dr over [0, r_max].

    `f` may carry trailing axes (e.g. 3-vectors per node); they are preserved.
    """
    f = _check_size(f, grid)
    return np.tensordot(grid.weights, f, axes=(0, 0))


def _derivative_matrix(nodes: np.ndarray, order: int, width: int = 3) -> sp.csr_matrix:
    n = nodes.size
    rows, cols, vals = [], [], []
    for i in range(n):
        if width == 5:
            lo = min(max(i - 2, 0), n - 5)
            idx = np.arange(lo, lo + 5)
        elif 0 < i < n - 1:
            idx = np.array([i - 1, i, i + 1])
        elif order == 1:
            idx = np.array([0, 1, 2]) if i == 0 else np.array([n - 3, n - 2, n - 1])
        else:
            idx = np.array([0, 1, 2, 3]) if i == 0 else np.array([n - 4, n - 3, n - 2, n - 1])
        w = _fd_weights(nodes[i], nodes[idx], order)
        rows.extend([i] * idx.size)
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _radial_laplacian_matrix(nodes: np.ndarray, sign: int) -> sp.csr_matrix:
    n = nodes.size
    r = nodes
    h = np.diff(r)
    mid = 0.5 * (r[:-1] + r[1:])
    lil = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        hm, hp = h[i - 1], h[i]
        vol = 0.5 * (hm + hp)
        if sign > 0:
            # r^-1 (r f')'
            cp = mid[i] / (hp * vol * r[i])
            cm = mid[i - 1] / (hm * vol * r[i])
        else:
            # r (r^-1 f')'
            cp = r[i] / (hp * vol * mid[i])
            cm = r[i] / (hm * vol * mid[i - 1])
        lil[i, i - 1] = cm
        lil[i, i + 1] = cp
        lil[i, i] = -(cm + cp)
    if sign > 0:
        lil[0, 0] = -4.0 / h[0] ** 2
        lil[0, 1] = 4.0 / h[0] ** 2
    # last node: one-sided stencils
    i = n - 1
    idx = np.arange(n - 4, n)
    w2 = _fd_weights(r[i], r[idx], 2)
    w1 = _fd_weights(r[i], r[idx], 1)
    for j, a, b in zip(idx, w2, w1):
        lil[i, j] = a + sign * b / r[i]
    lap = lil.tocsr()
    if sign < 0:
        # axis row: quadratic extrapolation of the interior values
        x = r[1:4]
        ext = np.array([
            x[1] * x[2] / ((x[0] - x[1]) * (x[0] - x[2])),
            x[0] * x[2] / ((x[1] - x[0]) * (x[1] - x[2])),
            x[0] * x[1] / ((x[2] - x[0]) * (x[2] - x[1])),
        ])
        row0 = sp.csr_matrix(ext @ lap[1:4].toarray()).reshape(1, n)
        lap = sp.vstack([row0, lap[1:]]).tocsr()
    return lap


def _radial_laplacian_high(nodes: np.ndarray, sign: int) -> sp.csr_matrix:
    n = nodes.size
    r = nodes
    rows, cols, vals = [], [], []
    for i in range(1, n):
        lo = min(max(i - 2, 0), n - 5)
        idx = np.arange(lo, lo + 5)
        w = _fd_weights(r[i], r[idx], 2) + sign * _fd_weights(r[i], r[idx], 1) / r[i]
        rows.extend([i] * 5)
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    if sign > 0:
        # mirror nodes 1, 2 to -r1, -r2 and fold the weights back
        x = np.array([-r[2], -r[1], 0.0, r[1], r[2]])
        w = 2.0 * _fd_weights(0.0, x, 2)
        rows.extend([0, 0, 0])
        cols.extend([0, 1, 2])
        vals.extend([w[2], w[1] + w[3], w[0] + w[4]])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def apply_derivative(f, grid: RadialGrid, order: int = 1) -> np.ndarray:
    """First or second radial derivative; centered inside, one-sided at the ends."""
    f = _check_size(f, grid)
    if order == 1:
        return grid.d1 @ f
    if order == 2:
        return grid.d2 @ f
    raise InvalidArgument(f"derivative order must be 1 or 2, got {order!r}")


def apply_radial_laplacian(f, grid: RadialGrid, sign_of_first_order: int = 1) -> np.ndarray:
    """d_rr f + sign * r^-1 d_r f with the axis value set by regularity.

    sign +1 is the 2D radial Laplacian (axis value 2 f''(0) from the even
    extension); sign -1 is the operator acting on the swirl profile W, which
    requires f(0) = 0.
    """
    f = _check_size(f, grid)
    if sign_of_first_order not in (1, -1):
        raise InvalidArgument("sign_of_first_order must be +1 or -1")
    if sign_of_first_order > 0:
        return grid.lap_plus @ f
    scale = max(1.0, float(np.max(np.abs(f))))
    if abs(f[0]) > 1e-12 * scale:
        raise AxisSingularity(f"operator d_rr - r^-1 d_r needs f(0) = 0, got f(0) = {f[0]!r}")
    return grid.lap_minus @ f
