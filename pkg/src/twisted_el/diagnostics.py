"""Energies, the energy identity, z-equation residuals, coercivity spectra,
decay-bound verdicts, rate fits and the bootstrap assumptions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy.linalg as sla

from .errors import (
    AxisSingularity,
    EigensolverFailure,
    InsufficientSamples,
    InsufficientWindow,
    InvalidArgument,
    NonpositiveValue,
    SizeMismatch,
)
from .gauge import GaugeFields, compute_gauge
from .grid import RadialGrid, _fd_weights, integrate_radial, make_grid
from .modulation import ModulationFrame, apply_N, compute_mod_ht, x_norm
from .profiles import (
    EquivariantState,
    ModelParams,
    harmonic_profile,
    oseen_w_over_r2_dr,
)


@dataclass
class DiagnosticsRecord:
    t: float
    sigma: float
    theta: float
    x_norm_z: float
    l2_z: float
    z_sup: float
    energy_E: float
    energy_Estar: float
    dissipation: float
    oseen_forcing: float
    energy_identity_residual: float
    v_l2: float
    v1_sup: float
    v2_l2: float
    wstar_over_r_l2: float
    wstar1_over_r2_sup: float
    wstar2_over_r_l2: float
    weighted_z_accumulator: float
    bootstrap_A1_ok: bool
    bootstrap_A2_ok: bool

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _over_r(f: np.ndarray, r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    out[1:] = f[1:] / r[1:]
    return out


def _l2(f: np.ndarray, grid: RadialGrid) -> float:
    return float(np.sqrt(max(integrate_radial(np.abs(f) ** 2, grid), 0.0)))


def energy_report(state: EquivariantState, gauge: GaugeFields, params: ModelParams, grid: RadialGrid):
    """(E, E*, dissipation, forcing), all integrals against r dr.

    E* = int |q|^2 + V^2 + (W*)^2 / r^2, E = E* + mu^2 int |v|^2,
    D = int |L_m q + mu^2 v phi3|^2 + (V_r)^2 + (W*_r)^2 / r^2,
    F = m int (W^os / r^2)_r <q, i v>.
    """
    r = grid.nodes
    if state.phi.shape[0] != grid.n or gauge.q.shape[0] != grid.n:
        raise SizeMismatch("state, gauge fields and grid disagree in size")
    mu, m = params.mu, params.m
    w_star = state.w_star
    e_star = integrate_radial(np.abs(gauge.q) ** 2 + state.v_vert**2 + _over_r(w_star, r) ** 2, grid)
    energy = e_star + mu**2 * integrate_radial(np.abs(gauge.v) ** 2, grid)

    lm_q = gauge.lm_q
    if lm_q is None:
        raise InvalidArgument("gauge fields were computed without L_m q")
    d1 = grid.d1_high
    v_r = d1 @ state.v_vert
    w_r = d1 @ w_star
    w_r_over_r = _over_r(w_r, r)
    # W* ~ c r^2 near the axis, so W*_r / r -> 2c
    w_r_over_r[0] = 2.0 * w_star[1] / r[1] ** 2 if grid.n > 1 else 0.0
    dissipation = integrate_radial(np.abs(lm_q + mu**2 * gauge.v * state.phi[:, 2]) ** 2 + v_r**2 + w_r_over_r**2, grid)
    q_dot_iv = np.real(gauge.q * np.conj(1j * gauge.v))
    forcing = m * integrate_radial(oseen_w_over_r2_dr(r, state.t, params) * q_dot_iv, grid)
    return float(energy), float(e_star), float(dissipation), float(forcing)


def time_derivative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Centered three-point derivative on a possibly nonuniform time axis; NaN at the ends."""
    times = np.asarray(times, float)
    values = np.asarray(values)
    out = np.full(values.shape, np.nan, dtype=values.dtype if np.iscomplexobj(values) else float)
    for k in range(1, len(times) - 1):
        w = _fd_weights(times[k], times[k - 1 : k + 2], 1)
        out[k] = np.tensordot(w, values[k - 1 : k + 2], axes=(0, 0))
    return out


def energy_identity_residual(times, energy, dissipation, forcing) -> float:
    """|(1/2)(E(t+D) - E(t-D)) / (2D) + dissipation(t) - forcing(t)| at the middle of three records."""
    times = np.asarray(times, float)
    if times.size != 3:
        raise InsufficientWindow("the energy identity residual needs three consecutive records")
    d_prev, d_next = times[1] - times[0], times[2] - times[1]
    if not (d_prev > 0 and d_next > 0) or abs(d_prev - d_next) > 1e-9 * max(d_prev, d_next):
        raise InsufficientWindow("records must be uniformly spaced")
    de = (energy[2] - energy[0]) / (times[2] - times[0])
    return float(abs(0.5 * de + dissipation[1] - forcing[1]))


def energy_identity_series(times, energy, dissipation, forcing) -> np.ndarray:
    """Pointwise residual 1/2 dE/dt + D - F (signed, NaN at the ends)."""
    de = time_derivative(times, energy)
    return 0.5 * de + np.asarray(dissipation) - np.asarray(forcing)


def windowed_energy_residual(times, energy, dissipation, forcing, window) -> float:
    """|1/2 (E(b) - E(a)) + int_a^b (D - F) dt| / (b - a) over the records in [a, b]."""
    times = np.asarray(times, float)
    sel = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
    if np.count_nonzero(sel) < 3:
        raise InsufficientWindow("need at least three records inside the window")
    t = times[sel]
    e = np.asarray(energy)[sel]
    net = np.asarray(dissipation)[sel] - np.asarray(forcing)[sel]
    integral = float(np.sum(0.5 * (net[1:] + net[:-1]) * np.diff(t)))
    return abs(0.5 * (e[-1] - e[0]) + integral) / (t[-1] - t[0])


def z_equation_residual(
    times: np.ndarray,
    frames: list[ModulationFrame],
    states: list[EquivariantState],
    k: int,
    grid: RadialGrid,
    params: ModelParams,
) -> np.ndarray:
    """Residual dz/dt + sigma^-2 N z - Mod - HT at record k (on its rho-nodes).

    z is stored at fixed r-nodes, so dz/dt|_rho = dZ/dt|_r + (sigma'/sigma) rho z_rho.
    """
    if not 0 < k < len(frames) - 1:
        raise InsufficientWindow("z-equation residual needs a record on each side")
    idx = slice(k - 1, k + 2)
    t = np.asarray(times, float)[idx]
    w = _fd_weights(t[1], t, 1)
    sig = np.array([f.sigma for f in frames[idx]])
    th = np.unwrap(np.array([f.theta for f in frames[idx]]))
    sigma_dot = float(w @ sig)
    theta_dot = float(w @ th)
    frame = frames[k]
    z_t_r = sum(wi * f.z for wi, f in zip(w, frames[idx]))
    rg = grid.scaled(1.0 / frame.sigma)
    z_rho = rg.d1_high @ frame.z
    z_t = z_t_r + sigma_dot / frame.sigma * rg.nodes * z_rho
    state = states[k]
    mod, ht = compute_mod_ht(frame, sigma_dot, theta_dot, state.w, state.v_vert, grid, params.m, params.mu)
    res = z_t + apply_N(frame.z, rg, params.m) / frame.sigma**2 - mod - ht
    res[0] = 0.0
    res[-1] = 0.0
    return res


def weighted_l2(f: np.ndarray, rho_grid_: RadialGrid) -> float:
    return _l2(f, rho_grid_)


# ---------------------------------------------------------------- coercivity


def _cell_forms(rho: np.ndarray, m: int):
    """Midpoint-rule matrices for int |L_h z|^2 and ||z||_X^2 on P1 nodal values.

    Cell-centred differences keep the Rayleigh quotient free of the odd-even
    null mode that a nodal centred derivative would introduce.
    """
    h = np.diff(rho)
    mid = 0.5 * (rho[1:] + rho[:-1])
    wts = mid * h
    _, h3 = harmonic_profile(mid, m)
    a = m * h3 / mid
    n = rho.size
    diff = np.zeros((n - 1, n))
    avg = np.zeros((n - 1, n))
    j = np.arange(n - 1)
    diff[j, j] = -1.0 / h
    diff[j, j + 1] = 1.0 / h
    avg[j, j] = 0.5
    avg[j, j + 1] = 0.5
    lh = diff + a[:, None] * avg
    over = avg / mid[:, None]
    A = lh.T @ (wts[:, None] * lh)
    B = diff.T @ (wts[:, None] * diff) + over.T @ (wts[:, None] * over)
    # unknowns exclude z(0) = 0 and z(rho_max) = 0
    return A[1:-1, 1:-1], B[1:-1, 1:-1]


@dataclass
class CoercivityResult:
    minimum: float
    vector: np.ndarray
    rho: np.ndarray


def coercivity_spectrum(
    grid: RadialGrid | int,
    m: int,
    operator: str = "Lh",
    constrained: bool = True,
    rho_max: float = 40.0,
    states=None,
):
    """Smallest Rayleigh quotient int |L_h z|^2 / ||z||_X^2 (optionally over z ⊥ h1).

    `grid` may be a rho-grid or a node count (graded grid on [0, rho_max]).
    For operator "Lm" pass `states` as a list of (phi, r-grid) pairs; the
    largest ratio int(|q_r|^2 + |q|^2 / r^2) / int |L_m q|^2 is returned.
    """
    if m < 3:
        raise InvalidArgument("coercivity checks need m >= 3")
    if operator == "Lm":
        if not states:
            raise InvalidArgument("the L_m ratio needs a family of states")
        return max(lm_ratio(phi, g, m) for phi, g in states)
    if operator != "Lh":
        raise InvalidArgument(f"unknown operator {operator!r}")
    if isinstance(grid, (int, np.integer)):
        grid = make_grid(rho_max, int(grid), "geometric-near-axis")
    rho = grid.nodes
    A, B = _cell_forms(rho, m)
    try:
        if constrained:
            h1, _ = harmonic_profile(rho, m)
            c = (grid.weights * h1)[1:-1]
            Q = sla.null_space(c[None, :])
            vals, vecs = sla.eigh(Q.T @ A @ Q, Q.T @ B @ Q, subset_by_index=[0, 0])
            vec = Q @ vecs[:, 0]
        else:
            vals, vecs = sla.eigh(A, B, subset_by_index=[0, 0])
            vec = vecs[:, 0]
    except (np.linalg.LinAlgError, ValueError) as err:
        raise EigensolverFailure(str(err)) from err
    full = np.zeros(rho.size)
    full[1:-1] = vec
    return CoercivityResult(minimum=float(vals[0]), vector=full, rho=rho.copy())


def kernel_alignment(vec: np.ndarray, rho: np.ndarray, m: int) -> float:
    """1 - |cos| of the angle between `vec` and h1 in the X inner product."""
    _, B = _cell_forms(rho, m)
    h1, _ = harmonic_profile(rho, m)
    x, y = vec[1:-1], h1[1:-1]
    cos = abs(x @ B @ y) / np.sqrt((x @ B @ x) * (y @ B @ y))
    return float(1.0 - cos)


def lm_ratio(phi: np.ndarray, grid: RadialGrid, m: int) -> float:
    """int (|q_r|^2 + |q|^2 / r^2) / int |L_m q|^2 for the q field of phi."""
    gauge = compute_gauge(phi, grid, m)
    r = grid.nodes
    q_r = grid.d1_high @ gauge.q
    num = integrate_radial(np.abs(q_r) ** 2 + np.abs(_over_r(gauge.q, r)) ** 2, grid)
    den = integrate_radial(np.abs(gauge.lm_q) ** 2, grid)
    return float(num / den)


# ------------------------------------------------------------ series checks


def fit_exponential_rate(times, values, window) -> tuple[float, float]:
    """Least-squares slope of log(value) against t inside `window`, with r^2."""
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    sel = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
    if np.count_nonzero(sel) < 10:
        raise InsufficientSamples(f"need >= 10 samples in the window, got {np.count_nonzero(sel)}")
    t, v = times[sel], values[sel]
    if np.any(v <= 0.0):
        raise NonpositiveValue("rate fit needs positive values")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # a flat series (up to rounding) is a perfect fit of slope 0
    r2 = 1.0 if ss_tot <= y.size * (1e-13 * max(1.0, abs(y.mean()))) ** 2 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), r2


def decay_bound_check(times, values, exponent: float, offset: bool = True) -> tuple[float, bool]:
    """Smallest C with value <= C (1+t)^exponent, and whether C is already
    attained in the first half of the samples (it must not grow later)."""
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if times.size < 4:
        raise InsufficientSamples("decay bound check needs at least 4 samples")
    if np.any(values < 0.0):
        raise InvalidArgument("decay bound check needs nonnegative values")
    base = 1.0 + times if offset else times
    with np.errstate(divide="ignore", invalid="ignore"):
        c = values * base ** (-exponent)
    c = np.where(np.isfinite(c), c, 0.0)
    half = 0.5 * (times[0] + times[-1])
    first, second = c[times <= half], c[times > half]
    c_min = float(c.max())
    ok = bool(second.max() <= first.max() * (1.0 + 1e-9) + 1e-300)
    return c_min, ok


def bootstrap_assumption_check(record, params: ModelParams, epsilon: float = 0.2, epsilon_star: float = 0.1):
    """(A1, A2): sigma inside (1 -/+ eps/2) e^{-mu^2 t / m^2} sigma_in, and
    int V2^2 <= eps*^{3/2} (1+t)^{-2}."""
    t = record.t
    centre = np.exp(-(params.mu**2) * t / params.m**2) * params.sigma_in
    a1 = (1.0 - epsilon / 2.0) * centre <= record.sigma <= (1.0 + epsilon / 2.0) * centre
    a2 = record.v2_l2**2 <= epsilon_star**1.5 * (1.0 + t) ** -2
    return bool(a1), bool(a2)


def self_similar_variables(t, r, params: ModelParams):
    """lambda(t) = mu^-1 e^{-mu^2 t / m^2}, s(t) = (m^2/2)(e^{2 mu^2 t / m^2} - 1), y = r / lambda."""
    k = params.mu**2 / params.m**2
    lam = np.exp(-k * np.asarray(t, float)) / params.mu
    s = 0.5 * params.m**2 * np.expm1(2.0 * k * np.asarray(t, float))
    return lam, s, np.asarray(r, float) / lam


def norm_equivalence(states) -> tuple[float, float]:
    """(min, max) of ||q||_{L^2} / ||z||_X over (phi, r-grid, frame) triples."""
    ratios = []
    for phi, grid, frame, m in states:
        gauge = compute_gauge(phi, grid, m, with_lm=False)
        xz = x_norm(frame.z, grid.scaled(1.0 / frame.sigma))
        if xz == 0.0:
            raise AxisSingularity("zero perturbation has no norm ratio")
        ratios.append(_l2(gauge.q, grid) / xz)
    return float(min(ratios)), float(max(ratios))


def build_record(
    state: EquivariantState,
    frame: ModulationFrame,
    gauge: GaugeFields,
    grid: RadialGrid,
    params: ModelParams,
    v1: np.ndarray | None,
    w1: np.ndarray | None,
    accumulator: float,
    epsilon: float = 0.2,
    epsilon_star: float = 0.1,
) -> DiagnosticsRecord:
    r = grid.nodes
    rg = grid.scaled(1.0 / frame.sigma)
    energy, e_star, diss, forcing = energy_report(state, gauge, params, grid)
    v1 = np.zeros_like(state.v_vert) if v1 is None else v1
    w1 = np.zeros_like(state.w_star) if w1 is None else w1
    w1_over_r2 = np.zeros_like(r)
    w1_over_r2[1:] = w1[1:] / r[1:] ** 2
    rec = DiagnosticsRecord(
        t=float(state.t),
        sigma=frame.sigma,
        theta=frame.theta,
        x_norm_z=x_norm(frame.z, rg),
        l2_z=frame.sigma * _l2(frame.z, rg),
        z_sup=float(np.max(np.abs(frame.z))),
        energy_E=energy,
        energy_Estar=e_star,
        dissipation=diss,
        oseen_forcing=forcing,
        energy_identity_residual=float("nan"),
        v_l2=_l2(state.v_vert, grid),
        v1_sup=float(np.max(np.abs(v1))),
        v2_l2=_l2(state.v_vert - v1, grid),
        wstar_over_r_l2=_l2(_over_r(state.w_star, r), grid),
        wstar1_over_r2_sup=float(np.max(np.abs(w1_over_r2[1:]))),
        wstar2_over_r_l2=_l2(_over_r(state.w_star - w1, r), grid),
        weighted_z_accumulator=accumulator,
        bootstrap_A1_ok=True,
        bootstrap_A2_ok=True,
    )
    rec.bootstrap_A1_ok, rec.bootstrap_A2_ok = bootstrap_assumption_check(rec, params, epsilon, epsilon_star)
    return rec
