"""Semi-implicit time stepping of the reduced director/swirl/vertical-flow system.

One step (IMEX Euler): the diffusion operators and the -(m^2/r^2 + mu^2) part
acting on the horizontal director components are implicit, everything else
(the Lagrange multiplier |phi_r|^2 + (m^2/r^2 + mu^2)|R phi|^2, transport by
the swirl and vertical flow, the forcing of W and V) is explicit. The director
is then renormalized nodewise. The implicit solves are banded (five-point
stencils by default).

The swirl is evolved through W* = W - W^os; the Oseen part solves the same
linear equation exactly and is added back analytically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .errors import InvalidArgument, NaNDetected, StabilityFailure
from .grid import RadialGrid
from .profiles import EquivariantState, ModelParams, apply_R, oseen_w, oseen_w_over_r2

MAX_CORRECTION = 1e-3

MODES = ("coupled", "heat-flow-only")


class SchemeOperators:
    """Implicit matrices for one grid/parameter set, factorized per step size."""

    def __init__(self, grid: RadialGrid, params: ModelParams, mode: str = "coupled", order: int = 4):
        if mode not in MODES:
            raise InvalidArgument(f"unknown mode {mode!r}")
        if order not in (2, 4):
            raise InvalidArgument("spatial order must be 2 or 4")
        self.grid = grid
        self.params = params
        self.mode = mode
        r = grid.nodes
        n = grid.n
        self.inner = slice(1, n - 1)
        # five-point stencils by default: the bubble drifts in scale at the
        # truncation order of the Laplacian, and O(h^2) is visible at m = 5
        lp = grid.lap_plus_high if order == 4 else grid.lap_plus
        lm = grid.lap_minus_high if order == 4 else grid.lap_minus
        self.lap = lp
        self.d1 = grid.d1_high if order == 4 else grid.d1
        pot = np.zeros(n)
        pot[1:] = params.m**2 / r[1:] ** 2 + params.mu**2
        self.pot = pot
        self._lp_in = lp[1 : n - 1, 1 : n - 1].tocsc()
        self._lm_in = lm[1 : n - 1, 1 : n - 1].tocsc()
        self._lp_v = lp[0 : n - 1, 0 : n - 1].tocsc()
        # couplings of the interior rows to the two Dirichlet nodes; the
        # director keeps its initial values there (-e3 on the axis, the
        # harmonic tail at r_max)
        self._b_axis = lp[1 : n - 1, 0].toarray().ravel()
        self._b_far = lp[1 : n - 1, n - 1].toarray().ravel()
        self._cache: dict[float, tuple] = {}

    def solvers(self, dt: float):
        key = float(dt)
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            n = self.grid.n
            eye_in = sp.identity(n - 2, format="csc")
            horiz = eye_in - dt * (self._lp_in - sp.diags(self.pot[1 : n - 1]))
            vert = eye_in - dt * self._lp_in
            swirl = eye_in - dt * self._lm_in
            axial = sp.identity(n - 1, format="csc") - dt * self._lp_v
            self._cache[key] = (
                factorized(horiz.tocsc()),
                factorized(vert.tocsc()),
                factorized(swirl.tocsc()),
                factorized(axial.tocsc()),
            )
        return self._cache[key]

    def advance_linear(self, v: np.ndarray, w_star: np.ndarray, dt: float, g: np.ndarray | None = None):
        """One implicit step of the V and W* equations with explicit forcing -mu g, -m g."""
        _, _, swirl, axial = self.solvers(dt)
        n = self.grid.n
        rhs_w = w_star[1 : n - 1].copy()
        rhs_v = v[0 : n - 1].copy()
        if g is not None:
            rhs_w -= dt * self.params.m * g[1 : n - 1]
            rhs_v -= dt * self.params.mu * g[0 : n - 1]
        w_new = np.zeros(n)
        v_new = np.zeros(n)
        w_new[1 : n - 1] = swirl(rhs_w)
        v_new[0 : n - 1] = axial(rhs_v)
        return v_new, w_new

    def step(self, state: EquivariantState, dt: float) -> tuple[EquivariantState, float]:
        """Advance one step; returns the new state and the renormalization correction."""
        if not dt > 0.0 or not np.isfinite(dt):
            raise InvalidArgument(f"time step must be positive, got {dt!r}")
        grid, params = self.grid, self.params
        n = grid.n
        r = grid.nodes
        phi = state.phi
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(state.w_star)) and np.all(np.isfinite(state.v_vert))):
            raise NaNDetected(f"non-finite values in state at t = {state.t}")
        horiz, vert, _, _ = self.solvers(dt)

        rphi = apply_R(phi)
        dphi = self.d1 @ phi
        lam = np.einsum("ij,ij->i", dphi, dphi) + self.pot * (phi[:, 0] ** 2 + phi[:, 1] ** 2)
        explicit = lam[:, None] * phi
        coupled = self.mode == "coupled"
        if coupled:
            w_over_r2 = oseen_w_over_r2(r, state.t, params)
            w_over_r2[1:] += state.w_star[1:] / r[1:] ** 2
            transport = params.m * w_over_r2 + params.mu * state.v_vert
            explicit -= transport[:, None] * rphi

        rhs = phi[1 : n - 1] + dt * explicit[1 : n - 1]
        rhs += dt * (np.outer(self._b_axis, phi[0]) + np.outer(self._b_far, phi[-1]))
        new = np.empty_like(phi)
        new[0] = phi[0]
        new[-1] = phi[-1]
        new[1 : n - 1, 0] = horiz(rhs[:, 0])
        new[1 : n - 1, 1] = horiz(rhs[:, 1])
        new[1 : n - 1, 2] = vert(rhs[:, 2])
        norms = np.linalg.norm(new, axis=1)
        if not np.all(np.isfinite(norms)):
            raise NaNDetected(f"non-finite director after step from t = {state.t}")
        correction = float(np.max(np.abs(norms - 1.0)))
        if correction > MAX_CORRECTION:
            raise StabilityFailure(f"renormalization correction {correction:.3e} exceeds {MAX_CORRECTION} (dt = {dt:.3e})")
        new /= norms[:, None]

        t_new = state.t + dt
        if coupled:
            g = forcing_density(phi, self.lap)
            v_new, w_star_new = self.advance_linear(state.v_vert, state.w_star, dt, g)
            w_new = oseen_w(r, t_new, params) + w_star_new
        else:
            v_new = np.zeros(n)
            w_star_new = np.zeros(n)
            w_new = np.zeros(n)
        return EquivariantState(phi=new, w=w_new, v_vert=v_new, t=t_new, w_star=w_star_new), correction


def forcing_density(phi: np.ndarray, lap_matrix) -> np.ndarray:
    """<Delta_2 phi, R phi> = phi1 Delta_2 phi2 - phi2 Delta_2 phi1."""
    lap = lap_matrix @ phi
    return phi[:, 0] * lap[:, 1] - phi[:, 1] * lap[:, 0]


@lru_cache(maxsize=16)
def _operators(grid: RadialGrid, params: ModelParams, mode: str) -> SchemeOperators:
    return SchemeOperators(grid, params, mode)


def step_coupled(state: EquivariantState, dt: float, grid: RadialGrid, params: ModelParams):
    """One coupled step; returns (new_state, renormalization_correction)."""
    return _operators(grid, params, "coupled").step(state, dt)


def step_heat_flow_only(state: EquivariantState, dt: float, grid: RadialGrid, params: ModelParams):
    """One step of the director flow alone (W = V = 0)."""
    return _operators(grid, params, "heat-flow-only").step(state, dt)


@dataclass
class TimeStepping:
    """Step-size policy; diagnostics are taken every `output_cadence` accepted steps."""

    dt: float = 1e-4
    t_end: float = 3.0
    output_cadence: int = 500
    dt_max: float | None = None
    grow_factor: float = 1.2
    grow_after: int = 10
    min_dt: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0.0:
            raise InvalidArgument("dt must be positive")
        if not self.t_end > 0.0:
            raise InvalidArgument("t_end must be positive")
        if int(self.output_cadence) != self.output_cadence or self.output_cadence < 1:
            raise InvalidArgument("output_cadence must be an integer >= 1")
        self.output_cadence = int(self.output_cadence)
        if self.dt_max is None:
            self.dt_max = self.dt
        if self.dt_max < self.dt:
            raise InvalidArgument("dt_max must be >= dt")


@dataclass
class CompanionFlows:
    """Unforced linear flows V1, W*1 advanced with the same implicit operators."""

    v1: np.ndarray
    w1: np.ndarray

    def advance(self, ops: SchemeOperators, dt: float) -> None:
        self.v1, self.w1 = ops.advance_linear(self.v1, self.w1, dt)


@dataclass
class OutputSample:
    state: EquivariantState
    companions: CompanionFlows | None
    steps: int
    rejected: int
    dt: float
    max_correction: float = 0.0
    extra: dict = field(default_factory=dict)


def integrate(
    initial: EquivariantState,
    grid: RadialGrid,
    params: ModelParams,
    stepping: TimeStepping,
    mode: str = "coupled",
    companions: bool = True,
) -> Iterator[OutputSample]:
    """Yield the state at t = 0, after every `output_cadence` accepted steps,
    and at t_end (the last step is shortened to land on it).

    A rejected step (renormalization correction too large) is retried with
    dt / 2; after `grow_after` consecutive acceptances dt grows by
    `grow_factor`, capped at dt_max.
    """
    ops = _operators(grid, params, mode)
    state = initial.copy()
    comp = CompanionFlows(initial.v_vert.copy(), initial.w_star.copy()) if (companions and mode == "coupled") else None
    dt = stepping.dt
    steps = rejected = streak = 0
    max_corr = 0.0
    yield OutputSample(state, _copy_comp(comp), steps, rejected, dt, max_corr)
    t_end = stepping.t_end
    while state.t < t_end - 1e-12 * max(1.0, t_end):
        h = min(dt, t_end - state.t)
        # avoid a sliver step just before t_end
        if t_end - state.t - h < 1e-9 * dt:
            h = t_end - state.t
        try:
            new, corr = ops.step(state, h)
        except StabilityFailure:
            rejected += 1
            streak = 0
            dt = 0.5 * min(dt, h)
            if dt < stepping.min_dt:
                raise
            continue
        if comp is not None:
            comp.advance(ops, h)
        state = new
        steps += 1
        max_corr = max(max_corr, corr)
        streak += 1
        if streak >= stepping.grow_after and dt < stepping.dt_max:
            dt = min(dt * stepping.grow_factor, stepping.dt_max)
            streak = 0
        at_end = state.t >= t_end - 1e-12 * max(1.0, t_end)
        if at_end:
            state.t = t_end
        if steps % stepping.output_cadence == 0 or at_end:
            yield OutputSample(state, _copy_comp(comp), steps, rejected, dt, max_corr)


def _copy_comp(comp: CompanionFlows | None) -> CompanionFlows | None:
    if comp is None:
        return None
    return CompanionFlows(comp.v1.copy(), comp.w1.copy())
