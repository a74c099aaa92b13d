"""Decomposition phi = exp(Theta R){(1 + gamma) h(r / sigma) + z1 e2 + z2 h x e2}.

z is stored on rho-nodes. When those are the r-nodes divided by sigma (the
default) synthesis and extraction are exact nodewise operations; any other
rho-grid is handled by monotone cubic resampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import AxisSingularity, InvalidArgument, NoConvergence, SizeMismatch
from .grid import RadialGrid, integrate_radial
from .profiles import (
    compose_director,
    gamma_from_modulus_sq,
    harmonic_profile,
    rotate,
)

EXTRACT_TOL = 1e-12
MAX_NEWTON = 50


@dataclass(eq=False)
class ModulationFrame:
    sigma: float
    theta: float
    z: np.ndarray
    rho: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise InvalidArgument(f"sigma must be positive, got {self.sigma!r}")
        self.z = np.asarray(self.z, dtype=complex)
        if self.z.shape != self.rho.shape:
            raise SizeMismatch("z and rho must have the same length")

    @property
    def gamma(self) -> np.ndarray:
        return gamma_of_z(self.z)


def gamma_of_z(z) -> np.ndarray:
    """gamma = sqrt(1 - |z|^2) - 1, defined for |z| <= 1/2."""
    a2 = np.abs(np.asarray(z)) ** 2
    if np.any(a2 > 0.25 * (1.0 + 1e-14)):
        raise InvalidArgument("gamma(z) needs |z| <= 1/2")
    return gamma_from_modulus_sq(a2)


def rho_grid(grid: RadialGrid, sigma: float) -> RadialGrid:
    return grid.scaled(1.0 / sigma)


def _on_nodes(frame: ModulationFrame, grid: RadialGrid) -> np.ndarray:
    """z at the rho values r_i / sigma of the given r-grid."""
    target = grid.nodes / frame.sigma
    if frame.rho.shape == target.shape and np.allclose(frame.rho, target, rtol=1e-13, atol=1e-15):
        return frame.z
    z = np.zeros(target.shape, dtype=complex)
    inside = target <= frame.rho[-1]
    re = PchipInterpolator(frame.rho, frame.z.real)(target[inside])
    im = PchipInterpolator(frame.rho, frame.z.imag)(target[inside])
    z[inside] = re + 1j * im
    return z


def synthesize_director(frame: ModulationFrame, grid: RadialGrid, m: int) -> np.ndarray:
    """Director profile phi on the r-grid from (sigma, Theta, z)."""
    z = _on_nodes(frame, grid)
    if np.max(np.abs(z)) > 0.5:
        raise InvalidArgument("frame violates sup|z| <= 1/2")
    phi = compose_director(frame.theta, grid.nodes / frame.sigma, z, m)
    phi[0] = (0.0, 0.0, -1.0)
    return phi


def _z_components(phi: np.ndarray, r: np.ndarray, sigma: float, theta: float, m: int) -> np.ndarray:
    zeta = rotate(-theta, phi)
    h1, h3 = harmonic_profile(r / sigma, m)
    # z1 = <zeta, e2>, z2 = <zeta, h x e2> with h x e2 = (-h3, 0, h1)
    return zeta[:, 1] + 1j * (h1 * zeta[:, 2] - h3 * zeta[:, 0])


def orthogonality_integral(z: np.ndarray, grid: RadialGrid, sigma: float, m: int) -> complex:
    """int z h1 rho drho, with z on the rho-nodes r_i / sigma of the r-grid."""
    h1, _ = harmonic_profile(grid.nodes / sigma, m)
    return complex(integrate_radial(z * h1, grid)) / sigma**2


def _constraint(phi, grid, sigma, theta, m) -> np.ndarray:
    val = orthogonality_integral(_z_components(phi, grid.nodes, sigma, theta, m), grid, sigma, m)
    return np.array([val.real, val.imag])


def initial_guess(phi: np.ndarray, grid: RadialGrid) -> tuple[float, float]:
    """Cheap (sigma, Theta) estimate: sigma where phi3 changes sign, Theta from
    the horizontal component there."""
    r = grid.nodes
    p3 = phi[:, 2]
    idx = np.nonzero((p3[:-1] < 0.0) & (p3[1:] >= 0.0))[0]
    if idx.size == 0:
        raise NoConvergence("director never crosses the equator; no bubble to modulate")
    i = int(idx[0])
    frac = -p3[i] / (p3[i + 1] - p3[i])
    sigma = r[i] + frac * (r[i + 1] - r[i])
    horiz = phi[i] + frac * (phi[i + 1] - phi[i])
    theta = float(np.arctan2(horiz[1], horiz[0]))
    return float(sigma), theta


def extract_modulation(
    phi: np.ndarray,
    grid: RadialGrid,
    m: int,
    guess: tuple[float, float] | None = None,
    tol: float = EXTRACT_TOL,
) -> ModulationFrame:
    """Solve int z h1 rho drho = 0 for (sigma, Theta) by damped Newton.

    Falls back to the equator-crossing estimate if the supplied guess fails.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n, 3):
        raise SizeMismatch(f"phi must have shape ({grid.n}, 3)")
    starts = []
    if guess is not None:
        starts.append((float(guess[0]), float(guess[1])))
    try:
        starts.append(initial_guess(phi, grid))
    except NoConvergence:
        if not starts:
            raise
    last_err = None
    for start in starts:
        try:
            return _newton(phi, grid, m, start, tol)
        except NoConvergence as err:
            last_err = err
    raise last_err


def _newton(phi, grid, m, start, tol) -> ModulationFrame:
    sigma, theta = start
    if not sigma > 0.0:
        raise NoConvergence("nonpositive starting scale")
    f = _constraint(phi, grid, sigma, theta, m)
    fnorm = np.linalg.norm(f)
    it = 0
    while fnorm >= tol:
        if it >= MAX_NEWTON:
            raise NoConvergence(f"Newton did not converge in {MAX_NEWTON} iterations (|F| = {fnorm:.3e})")
        it += 1
        ds, dth = 1e-6 * sigma, 1e-6
        jac = np.empty((2, 2))
        jac[:, 0] = (_constraint(phi, grid, sigma + ds, theta, m) - _constraint(phi, grid, sigma - ds, theta, m)) / (2 * ds)
        jac[:, 1] = (_constraint(phi, grid, sigma, theta + dth, m) - _constraint(phi, grid, sigma, theta - dth, m)) / (2 * dth)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as err:
            raise NoConvergence("singular Jacobian in modulation solve") from err
        lam = 1.0
        for _ in range(40):
            s_new = sigma + lam * step[0]
            if s_new > 0.0:
                f_new = _constraint(phi, grid, s_new, theta + lam * step[1], m)
                if np.linalg.norm(f_new) < fnorm:
                    break
            lam *= 0.5
        else:
            # no decrease possible: accept if already at rounding level
            if fnorm < 1e3 * tol:
                break
            raise NoConvergence(f"line search stalled at |F| = {fnorm:.3e}")
        sigma, theta = s_new, theta + lam * step[1]
        f, fnorm = f_new, np.linalg.norm(f_new)

    z = _z_components(phi, grid.nodes, sigma, theta, m)
    z[0] = 0.0
    if np.max(np.abs(z)) > 0.5:
        raise NoConvergence("decomposition left the validity domain sup|z| <= 1/2")
    h1, h3 = harmonic_profile(grid.nodes / sigma, m)
    zeta = rotate(-theta, phi)
    along = h1 * zeta[:, 0] + h3 * zeta[:, 2]
    residual = float(np.max(np.abs(along - (1.0 + gamma_of_z(z)))))
    theta = float(np.remainder(theta + np.pi, 2.0 * np.pi) - np.pi)
    return ModulationFrame(sigma=float(sigma), theta=theta, z=z, rho=grid.nodes / sigma, residual=residual, iterations=it)


def x_norm(z: np.ndarray, rho_grid_: RadialGrid) -> float:
    """||z||_X^2 = int |d_rho z|^2 + |z|^2 / rho^2 rho drho."""
    rho = rho_grid_.nodes
    z = np.asarray(z)
    if abs(z[0]) > 1e-12 * max(1.0, float(np.max(np.abs(z)))):
        raise AxisSingularity(f"X-norm needs z(0) = 0, got {z[0]!r}")
    dz = rho_grid_.d1_high @ z
    over = np.zeros(rho.size)
    over[1:] = np.abs(z[1:]) ** 2 / rho[1:] ** 2
    return float(np.sqrt(integrate_radial(np.abs(dz) ** 2 + over, rho_grid_)))


def apply_Lh(z: np.ndarray, rho_grid_: RadialGrid, m: int, adjoint: bool = False) -> np.ndarray:
    """L_h z = d_rho z + (m / rho) h3 z, or its L^2(rho drho) adjoint
    L_h* w = -d_rho w - w / rho + (m / rho) h3 w.

    Axis values use z ~ z'(0) rho, i.e. the limits (1 - m) z'(0) and -(2 + m) w'(0).
    """
    rho = rho_grid_.nodes
    _, h3 = harmonic_profile(rho, m)
    dz = rho_grid_.d1_high @ z
    over = np.zeros_like(z)
    over[1:] = z[1:] / rho[1:]
    if not adjoint:
        out = dz + m * h3 * over
        out[0] = (1.0 - m) * dz[0]
    else:
        out = -dz - over + m * h3 * over
        out[0] = -(2.0 + m) * dz[0]
    return out


def apply_N(z: np.ndarray, rho_grid_: RadialGrid, m: int) -> np.ndarray:
    """N z = -z'' - z' / rho - (m^2 / rho^2)(2 h1^2 - 1) z; 0 at the axis."""
    rho = rho_grid_.nodes
    h1, _ = harmonic_profile(rho, m)
    pot = np.zeros_like(rho)
    pot[1:] = m**2 / rho[1:] ** 2 * (2.0 * h1[1:] ** 2 - 1.0)
    out = -(rho_grid_.lap_plus_high @ z) - pot * z
    out[0] = 0.0
    return out


def _resample(values: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    if src.shape == dst.shape and np.allclose(src, dst, rtol=1e-13, atol=1e-15):
        return values
    return PchipInterpolator(src, values)(dst)


def compute_mod_ht(
    frame: ModulationFrame,
    sigma_dot: float,
    theta_dot: float,
    w: np.ndarray,
    v_vert: np.ndarray,
    grid: RadialGrid,
    m: int,
    mu: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Modulation forcing Mod and higher-order terms HT on the rho-nodes of `frame`.

    `w` and `v_vert` are given on the r-grid `grid`; `frame.rho * sigma` should
    coincide with its nodes (otherwise they are resampled).
    """
    sigma = frame.sigma
    rho = frame.rho
    rgrid = RadialGrid(nodes=rho, weights=grid.weights / sigma**2, r_max=rho[-1])
    r = rho * sigma
    w = _resample(np.asarray(w, float), grid.nodes, r)
    v = _resample(np.asarray(v_vert, float), grid.nodes, r)

    z = frame.z
    z1, z2 = z.real, z.imag
    gam = gamma_of_z(z)
    h1, h3 = harmonic_profile(rho, m)
    d = rgrid.d1_high
    z_rho = d @ z
    z1r, z2r = z_rho.real, z_rho.imag
    g_rho = d @ gam

    inv_rho = np.zeros_like(rho)
    inv_rho[1:] = 1.0 / rho[1:]
    w_over_r2 = np.zeros_like(rho)
    w_over_r2[1:] = w[1:] / r[1:] ** 2
    w_over_r2[0] = w_over_r2[1]

    rot_rate = theta_dot + mu * v + m * w_over_r2
    mod = (
        -((1.0 + gam) * h1 + 1j * h3 * z) * rot_rate
        + (sigma_dot / sigma) * (1j * (1.0 + gam) * m * h1 + rho * z_rho)
        + mu**2 * (1j * (1.0 + gam) * h1 * h3 + 1j * h1**2 * z2 - h3**2 * z)
    )

    a = m * h1 * inv_rho
    mix = gam * h1 - z2 * h3
    grad_terms = (g_rho - a * z2) ** 2 + z1r**2 + (z2r + a * gam) ** 2 + 2.0 * a * (z2r + a * gam)
    ht = (
        1j / sigma**2 * 2.0 * a * g_rho
        + (m**2 * inv_rho**2 / sigma**2 + mu**2) * z * (z1**2 + mix**2 + 2.0 * h1 * mix)
        + grad_terms * z / sigma**2
    )
    mod[0] = 0.0
    ht[0] = 0.0
    return mod, ht
