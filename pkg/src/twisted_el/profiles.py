"""Closed-form profiles: the equivariant harmonic map h, its rotated/scaled
family, the Oseen vortex, admissible perturbations, initial data, and the 3D
fields rebuilt from a radial state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InvalidArgument, OutOfDomain, UnitNormViolation
from .grid import RadialGrid, integrate_radial

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

# generator of horizontal rotations
R_MATRIX = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def rotation(alpha) -> np.ndarray:
    """exp(alpha R); broadcasts over an array of angles (shape (..., 3, 3))."""
    alpha = np.asarray(alpha, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    out = np.zeros(alpha.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def rotate(alpha, vecs: np.ndarray) -> np.ndarray:
    """Apply exp(alpha R) to a stack of 3-vectors (shape (..., 3))."""
    vecs = np.asarray(vecs, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    out = np.empty(np.broadcast_shapes(np.shape(c) + (3,), vecs.shape))
    out[..., 0] = c * vecs[..., 0] - s * vecs[..., 1]
    out[..., 1] = s * vecs[..., 0] + c * vecs[..., 1]
    out[..., 2] = vecs[..., 2]
    return out


def apply_R(vecs: np.ndarray) -> np.ndarray:
    """R phi = (-phi_2, phi_1, 0) for a stack of vectors."""
    out = np.zeros_like(vecs)
    out[..., 0] = -vecs[..., 1]
    out[..., 1] = vecs[..., 0]
    return out


@dataclass(frozen=True)
class ModelParams:
    """Structural parameters of the reduced system.

    m: equivariance index (m >= 3), mu: twist rate, omega: circulation
    Reynolds number, r0: initial Oseen core radius, sigma_in / theta_in:
    initial scale and rotation of the bubble.
    """

    m: int
    mu: float
    omega: float = 0.0
    r0: float = 1.0
    sigma_in: float = 0.5
    theta_in: float = 0.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 3:
            raise InvalidArgument(f"|m| must be >= 3 (negative m unsupported), got m={self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        if not self.mu > 0.0:
            raise InvalidArgument(f"mu must be > 0, got {self.mu!r}")
        if not self.r0 > 0.0:
            raise InvalidArgument(f"r0 must be > 0, got {self.r0!r}")
        if not self.sigma_in > 0.0:
            raise InvalidArgument(f"sigma_in must be > 0, got {self.sigma_in!r}")

    @classmethod
    def unvalidated(cls, **kwargs) -> "ModelParams":
        """Bypass validation (test-only overrides such as mu = 0)."""
        obj = object.__new__(cls)
        defaults = {f.name: f.default for f in fields(cls)}
        defaults.update(kwargs)
        for k, v in defaults.items():
            object.__setattr__(obj, k, v)
        return obj


@dataclass(eq=False)
class EquivariantState:
    """Radial director profile phi (n, 3), swirl W, vertical velocity V at time t.

    ``w_star`` is the non-Oseen part W - W^os; it is the evolved unknown, ``w``
    is kept alongside it for output.
    """

    phi: np.ndarray
    w: np.ndarray
    v_vert: np.ndarray
    t: float = 0.0
    w_star: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.w_star is None:
            self.w_star = np.zeros_like(self.w)

    def copy(self) -> "EquivariantState":
        return EquivariantState(self.phi.copy(), self.w.copy(), self.v_vert.copy(), self.t, self.w_star.copy())


def harmonic_profile(rho, m: int):
    """(h1, h3) of the degree-m equivariant harmonic map at radius rho.

    h1 = 2 / (rho^m + rho^-m), h3 = (rho^m - rho^-m) / (rho^m + rho^-m),
    evaluated through t = min(rho, 1/rho)^m so neither tail overflows.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise InvalidArgument("rho must be nonnegative")
    m = abs(int(m))
    inner = rho <= 1.0
    with np.errstate(divide="ignore"):
        base = np.where(inner, rho, 1.0 / np.where(inner, 1.0, rho))
    t = base**m
    t2 = t * t
    h1 = 2.0 * t / (1.0 + t2)
    h3 = (1.0 - t2) / (1.0 + t2)
    h3 = np.where(inner, -h3, h3)
    if h1.ndim == 0:
        return float(h1), float(h3)
    return h1, h3


def harmonic_vector(rho, m: int) -> np.ndarray:
    """h(rho) = (h1, 0, h3) as an array of shape (..., 3)."""
    h1, h3 = harmonic_profile(rho, m)
    h1, h3 = np.asarray(h1), np.asarray(h3)
    return np.stack([h1, np.zeros_like(h1), h3], axis=-1)


def rotated_scaled_profile(r, alpha: float, sigma: float, m: int) -> np.ndarray:
    """h^{alpha, sigma}(r) = exp(alpha R) h(r / sigma)."""
    if not sigma > 0.0:
        raise InvalidArgument(f"sigma must be positive, got {sigma!r}")
    r = np.asarray(r, dtype=float)
    if np.any(np.isinf(r)):
        out = np.zeros(r.shape + (3,))
        out[..., 2] = 1.0
        finite = np.isfinite(r)
        out[finite] = rotate(alpha, harmonic_vector(r[finite] / sigma, m))
        return out
    return rotate(alpha, harmonic_vector(r / sigma, m))


def oseen_length(t, params: ModelParams):
    return 4.0 * np.asarray(t, dtype=float) + params.r0**2


def oseen_w(r, t, params: ModelParams):
    """Oseen swirl W^os = omega (1 - exp(-r^2 / l(t))), l(t) = 4t + r0^2."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0) or np.any(np.asarray(t) < 0.0):
        raise InvalidArgument("oseen_w needs r >= 0 and t >= 0")
    out = -params.omega * np.expm1(-(r**2) / oseen_length(t, params))
    return float(out) if out.ndim == 0 else out


def oseen_w_over_r2(r, t, params: ModelParams) -> np.ndarray:
    """W^os / r^2 with its axis limit omega / l."""
    r = np.asarray(r, dtype=float)
    ell = oseen_length(t, params)
    x = r**2 / ell
    small = x < 1e-8
    xs = np.where(small, 1.0, x)
    g = np.where(small, 1.0 - 0.5 * x, -np.expm1(-xs) / xs)
    return params.omega / ell * g


def oseen_w_over_r2_dr(r, t, params: ModelParams) -> np.ndarray:
    """Radial derivative of W^os / r^2."""
    r = np.asarray(r, dtype=float)
    ell = oseen_length(t, params)
    x = r**2 / ell
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    # g(x) = (1 - e^-x)/x, g'(x) = (e^-x (1 + x) - 1)/x^2
    dg = np.where(small, -0.5 + x / 3.0 - x * x / 8.0, (np.exp(-xs) * (1.0 + xs) - 1.0) / xs**2)
    return params.omega / ell * dg * 2.0 * r / ell


def gamma_from_modulus_sq(abs_z_sq) -> np.ndarray:
    """sqrt(1 - |z|^2) - 1 written without cancellation."""
    abs_z_sq = np.asarray(abs_z_sq, dtype=float)
    return -abs_z_sq / (1.0 + np.sqrt(1.0 - abs_z_sq))


def compose_director(theta: float, rho: np.ndarray, z: np.ndarray, m: int) -> np.ndarray:
    """exp(theta R){(1 + gamma) h + z1 e2 + z2 h x e2} at the given rho values."""
    z = np.asarray(z, dtype=complex)
    h1, h3 = harmonic_profile(rho, m)
    gam = gamma_from_modulus_sq(np.abs(z) ** 2)
    z1, z2 = z.real, z.imag
    # h x e2 = (-h3, 0, h1)
    zeta = np.stack([(1.0 + gam) * h1 - z2 * h3, z1, (1.0 + gam) * h3 + z2 * h1], axis=-1)
    return rotate(theta, zeta)


def _bump(rho: np.ndarray, center: float, m: int) -> np.ndarray:
    x = rho / center
    return x**m * np.exp(-0.5 * m * (x * x - 1.0))


PERTURBATION_KINDS = ("bump", "real", "imag")


def make_test_perturbation(
    kind: str,
    amplitude: float,
    grid: RadialGrid,
    m: int,
    *,
    center: float = 1.5,
    phase: float = 0.0,
) -> np.ndarray:
    """Admissible perturbation z_in on a rho-grid.

    The raw shape is rho^m-like at the axis and Gaussian in the tail; both real
    and imaginary parts are projected against h1 in L^2(rho drho) and the result
    is rescaled so that sup |z| = amplitude.
    """
    if kind not in PERTURBATION_KINDS:
        raise InvalidArgument(f"unknown perturbation kind {kind!r}")
    if amplitude < 0.0:
        raise InvalidArgument("amplitude must be nonnegative")
    if amplitude >= 0.5:
        raise InvalidArgument(f"amplitude {amplitude} violates sup|z| < 1/2")
    rho = grid.nodes
    if amplitude == 0.0:
        return np.zeros(rho.size, dtype=complex)
    if kind == "bump":
        raw = _bump(rho, center, m) + 1j * _bump(rho, 1.4 * center, m)
    elif kind == "real":
        raw = _bump(rho, center, m).astype(complex)
    else:
        raw = 1j * _bump(rho, center, m)
    raw = raw * np.exp(1j * phase)
    h1, _ = harmonic_profile(rho, m)
    z = raw - integrate_radial(raw * h1, grid) / integrate_radial(h1 * h1, grid) * h1
    peak = np.max(np.abs(z))
    z = z * (amplitude / peak)
    # second pass removes the rounding left by the first projection
    z = z - integrate_radial(z * h1, grid) / integrate_radial(h1 * h1, grid) * h1
    return z


def gaussian_v(grid: RadialGrid, l2_norm: float, width: float = 1.0) -> np.ndarray:
    """V_in = a exp(-r^2 / width^2) with L^2(r dr) norm `l2_norm` (analytic: a width / 2)."""
    a = 2.0 * l2_norm / width
    return a * np.exp(-(grid.nodes / width) ** 2)


def gaussian_w_star(grid: RadialGrid, l2_norm_over_r: float, width: float = 1.0) -> np.ndarray:
    """W*_in = b r^2 exp(-r^2 / width^2) with ||W*_in / r||_{L^2(r dr)} = l2_norm_over_r."""
    # int r^2 e^{-2 r^2/w^2} r dr = w^4 / 8
    b = l2_norm_over_r * np.sqrt(8.0) / width**2
    return b * grid.nodes**2 * np.exp(-(grid.nodes / width) ** 2)


def build_initial_data(
    grid: RadialGrid,
    params: ModelParams,
    z_in: np.ndarray | None = None,
    w_star_in: np.ndarray | None = None,
    v_in: np.ndarray | None = None,
) -> EquivariantState:
    """Initial state phi_in = exp(Theta_in R){(1 + gamma_in) h + z1 e2 + z2 h x e2}.

    `z_in` lives on the rho-nodes r_i / sigma_in.
    """
    n = grid.n
    z_in = np.zeros(n, dtype=complex) if z_in is None else np.asarray(z_in, dtype=complex)
    w_star_in = np.zeros(n) if w_star_in is None else np.asarray(w_star_in, dtype=float)
    v_in = np.zeros(n) if v_in is None else np.asarray(v_in, dtype=float)
    for name, arr in (("z_in", z_in), ("w_star_in", w_star_in), ("v_in", v_in)):
        if arr.shape != (n,):
            raise InvalidArgument(f"{name} must have one value per node ({n}), got shape {arr.shape}")
    if np.max(np.abs(z_in)) >= 0.5:
        raise InvalidArgument("z_in violates sup|z| < 1/2")
    if abs(z_in[0]) > 1e-14:
        raise InvalidArgument("z_in must vanish at the axis")
    if abs(w_star_in[0]) > 1e-14:
        raise InvalidArgument("w_star_in must vanish at the axis")

    rho = grid.nodes / params.sigma_in
    phi = compose_director(params.theta_in, rho, z_in, params.m)
    phi[0] = -E3
    dev = np.max(np.abs(np.linalg.norm(phi, axis=1) - 1.0))
    if dev > 1e-10:
        raise UnitNormViolation(f"initial director deviates from unit length by {dev:.3e}")
    w_os = oseen_w(grid.nodes, 0.0, params)
    return EquivariantState(phi=phi, w=w_os + w_star_in, v_vert=v_in.copy(), t=0.0, w_star=w_star_in.copy())


def reconstruct_3d(state: EquivariantState, params: ModelParams, sample_points, grid: RadialGrid):
    """Velocity u and director phi_3d at 3D points from the radial state.

    u = (W / r^2)(-x2, x1, 0) + (0, 0, V), phi_3d = exp(mu x3 R) exp(m theta R) phi(r).
    Returns arrays (u, phi3d) of shape (k, 3).
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    x1, x2, x3 = pts[:, 0], pts[:, 1], pts[:, 2]
    r = np.hypot(x1, x2)
    if np.any(r > grid.r_max * (1.0 + 1e-12)):
        raise OutOfDomain("sample point outside the radial domain")
    theta = np.arctan2(x2, x1)

    nodes = grid.nodes
    phi_r = np.stack([PchipInterpolator(nodes, state.phi[:, k])(r) for k in range(3)], axis=-1)
    phi_r /= np.linalg.norm(phi_r, axis=1, keepdims=True)
    phi3d = rotate(params.mu * x3 + params.m * theta, phi_r)

    w_over_r2 = np.empty_like(nodes)
    w_over_r2[1:] = state.w[1:] / nodes[1:] ** 2
    # W(0) = 0 and W ~ r^2: quadratic extrapolation of W / r^2 to the axis
    w_over_r2[0] = _extrap0(nodes[1:4], w_over_r2[1:4])
    swirl = PchipInterpolator(nodes, w_over_r2)(r)
    vz = PchipInterpolator(nodes, state.v_vert)(r)
    u = np.stack([-swirl * x2, swirl * x1, vz], axis=-1)
    return u, phi3d


def _extrap0(x: np.ndarray, y: np.ndarray) -> float:
    coeffs = np.polyfit(x, y, len(x) - 1)
    return float(np.polyval(coeffs, 0.0))
