"""Configuration, run orchestration, output files, parameter sweeps and the
invariant suite behind ``twisted-el verify``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import diagnostics as diag
from .errors import ConfigError, InvalidArgument, NaNDetected, NoConvergence, StabilityFailure, TwistedELError
from .evolution import MODES, TimeStepping, integrate
from .gauge import compute_gauge
from .grid import GRADINGS, RadialGrid, make_grid
from .modulation import ModulationFrame, extract_modulation
from .profiles import (
    EquivariantState,
    ModelParams,
    PERTURBATION_KINDS,
    build_initial_data,
    gaussian_v,
    gaussian_w_star,
    make_test_perturbation,
)

log = logging.getLogger(__name__)

FLOAT_FMT = ".17g"

TIMESERIES_COLUMNS = [
    ("t", "t"),
    ("sigma", "sigma"),
    ("theta", "theta"),
    ("x_norm_z", "x_norm_z"),
    ("E", "energy_E"),
    ("Estar", "energy_Estar"),
    ("dissipation", "dissipation"),
    ("forcing", "oseen_forcing"),
    ("residual", "energy_identity_residual"),
    ("V_L2", "v_l2"),
    ("V2_L2", "v2_l2"),
    ("Wstar_over_r_L2", "wstar_over_r_l2"),
    ("l2_z", "l2_z"),
    ("z_sup", "z_sup"),
    ("V1_sup", "v1_sup"),
    ("Wstar1_over_r2_sup", "wstar1_over_r2_sup"),
    ("Wstar2_over_r_L2", "wstar2_over_r_l2"),
    ("weighted_z_accumulator", "weighted_z_accumulator"),
    ("A1_ok", "bootstrap_A1_ok"),
    ("A2_ok", "bootstrap_A2_ok"),
]

SNAPSHOT_COLUMNS = ["r", "phi1", "phi2", "phi3", "W", "V", "q_re", "q_im", "v_re", "v_im"]

EXIT_OK, EXIT_ERROR, EXIT_BREAKDOWN = 0, 1, 2


@dataclass
class RunConfig:
    """Everything a run needs. Flat keys, mirrored one-to-one in the YAML file."""

    m: int
    mu: float
    omega: float = 0.0
    r0: float = 1.0
    sigma_in: float = 0.5
    theta_in: float = 0.0
    r_max: float | None = None
    n: int = 512
    grading: str = "geometric-near-axis"
    dt: float = 1e-4
    dt_max: float | None = None
    t_end: float = 3.0
    output_cadence: int = 500
    mode: str = "coupled"
    companion_flows: bool = True
    z_kind: str = "bump"
    z_amplitude: float = 1e-3
    z_center: float = 1.5
    v_in_l2: float = 0.0
    wstar_in_l2: float = 0.0
    epsilon: float = 0.2
    epsilon_star: float = 0.1
    snapshot_every: int = 10
    min_cells_per_sigma: float = 8.0
    fit_window: tuple[float, float] = (0.5, 3.0)

    def __post_init__(self):
        if self.r_max is None:
            self.r_max = max(50.0 * self.sigma_in, 10.0 * self.r0)
        self.fit_window = tuple(float(x) for x in self.fit_window)
        if len(self.fit_window) != 2 or self.fit_window[0] >= self.fit_window[1]:
            raise InvalidArgument("fit_window must be [t_lo, t_hi] with t_lo < t_hi")
        if self.grading not in GRADINGS:
            raise InvalidArgument(f"grading must be one of {GRADINGS}")
        if self.mode not in MODES:
            raise InvalidArgument(f"mode must be one of {MODES}")
        if self.z_kind not in PERTURBATION_KINDS:
            raise InvalidArgument(f"z_kind must be one of {PERTURBATION_KINDS}")
        if self.snapshot_every < 1:
            raise InvalidArgument("snapshot_every must be >= 1")
        if self.v_in_l2 < 0 or self.wstar_in_l2 < 0:
            raise InvalidArgument("initial flow norms must be nonnegative")
        # constructing these validates the remaining fields
        self.params
        self.stepping

    @property
    def params(self) -> ModelParams:
        return ModelParams(
            m=self.m, mu=self.mu, omega=self.omega, r0=self.r0, sigma_in=self.sigma_in, theta_in=self.theta_in
        )

    @property
    def stepping(self) -> TimeStepping:
        return TimeStepping(dt=self.dt, t_end=self.t_end, output_cadence=self.output_cadence, dt_max=self.dt_max)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["fit_window"] = list(self.fit_window)
        return out

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


def config_from_mapping(data: dict, source: str = "<mapping>") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a key-value mapping at top level")
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    for key in ("m", "mu"):
        if key not in data:
            raise ConfigError(f"{source}: missing required key '{key}'")
    try:
        return RunConfig(**data)
    except InvalidArgument as err:
        raise ConfigError(f"{source}: invalid value: {err}") from err
    except TypeError as err:
        raise ConfigError(f"{source}: {err}") from err


def load_config(path) -> RunConfig:
    """Parse a YAML config file into a validated RunConfig."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{path}: parse error at {where}: {err.problem}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: parse error: {err}") from err
    return config_from_mapping(data if data is not None else {}, str(path))


@dataclass(eq=False)
class Trajectory:
    config: RunConfig
    grid: RadialGrid
    records: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    states: list = field(default_factory=list)
    status: str = "completed"
    marker: str | None = None
    message: str = ""
    steps: int = 0
    rejected: int = 0
    max_correction: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def initial_state(config: RunConfig) -> tuple[RadialGrid, EquivariantState]:
    grid = make_grid(config.r_max, config.n, config.grading)
    params = config.params
    z_in = make_test_perturbation(
        config.z_kind, config.z_amplitude, grid.scaled(1.0 / config.sigma_in), config.m, center=config.z_center
    )
    v_in = gaussian_v(grid, config.v_in_l2) if config.mode == "coupled" else None
    w_in = gaussian_w_star(grid, config.wstar_in_l2) if config.mode == "coupled" else None
    return grid, build_initial_data(grid, params, z_in=z_in, w_star_in=w_in, v_in=v_in)


def _local_spacing(grid: RadialGrid, r: float) -> float:
    i = int(np.clip(np.searchsorted(grid.nodes, r), 1, grid.n - 1))
    return float(grid.nodes[i] - grid.nodes[i - 1])


def run_simulation(config: RunConfig, keep_states: bool = True, on_record=None) -> Trajectory:
    """Integrate, extract the modulation frame and diagnostics at each output.

    Decomposition failure ends the run with status "breakdown"; a bubble that
    shrinks below `min_cells_per_sigma` local cells ends it early with a marker.
    """
    grid, state0 = initial_state(config)
    params = config.params
    traj = Trajectory(config=config, grid=grid)
    guess = (config.sigma_in, config.theta_in)
    acc = 0.0
    prev = None
    try:
        for out in integrate(state0, grid, params, config.stepping, config.mode, config.companion_flows):
            state = out.state
            traj.steps, traj.rejected, traj.max_correction = out.steps, out.rejected, out.max_correction
            try:
                frame = extract_modulation(state.phi, grid, config.m, guess=guess)
            except NoConvergence as err:
                traj.status = "breakdown"
                traj.marker = "decomposition-breakdown"
                traj.message = f"t = {state.t:.6g}: {err}"
                break
            guess = (frame.sigma, frame.theta)
            gauge = compute_gauge(state.phi, grid, config.m)
            xz = diag.x_norm(frame.z, grid.scaled(1.0 / frame.sigma))
            weight = math.exp(2.0 * config.mu**2 * state.t / config.m**2) * xz**2
            if prev is not None:
                acc += 0.5 * (prev[1] + weight) * (state.t - prev[0])
            prev = (state.t, weight)
            comp = out.companions
            rec = diag.build_record(
                state, frame, gauge, grid, params,
                comp.v1 if comp else None, comp.w1 if comp else None,
                acc, config.epsilon, config.epsilon_star,
            )
            traj.records.append(rec)
            traj.frames.append(frame)
            if keep_states:
                traj.states.append(state.copy())
            if on_record is not None:
                on_record(rec, state, frame, gauge)
            if frame.sigma < config.min_cells_per_sigma * _local_spacing(grid, frame.sigma):
                traj.marker = "sigma-underresolved"
                traj.message = f"stopped at t = {state.t:.6g}: sigma = {frame.sigma:.4g} spans fewer than {config.min_cells_per_sigma:g} cells"
                break
    except (StabilityFailure, NaNDetected) as err:
        traj.status = "aborted"
        traj.message = str(err)
    _fill_energy_residuals(traj)
    return traj


def _fill_energy_residuals(traj: Trajectory) -> None:
    recs = traj.records
    if len(recs) < 3:
        return
    res = diag.energy_identity_series(
        traj.times, traj.series("energy_E"), traj.series("dissipation"), traj.series("oseen_forcing")
    )
    for rec, val in zip(recs, res):
        rec.energy_identity_residual = float(abs(val)) if np.isfinite(val) else float("nan")


def fitted_sigma_rate(traj: Trajectory, window=None):
    window = traj.config.fit_window if window is None else window
    return diag.fit_exponential_rate(traj.times, traj.series("sigma"), window)


# ------------------------------------------------------------------ output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return format(float(x), FLOAT_FMT)


def write_timeseries(traj: Trajectory, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(name for name, _ in TIMESERIES_COLUMNS) + "\n")
        for rec in traj.records:
            fh.write(",".join(_fmt(getattr(rec, attr)) for _, attr in TIMESERIES_COLUMNS) + "\n")


def snapshot_name(t: float) -> str:
    return f"profile_t{t:.6f}.csv"


def write_snapshot(state: EquivariantState, grid: RadialGrid, m: int, path: Path) -> None:
    gauge = compute_gauge(state.phi, grid, m, with_lm=False)
    cols = [
        grid.nodes, state.phi[:, 0], state.phi[:, 1], state.phi[:, 2], state.w, state.v_vert,
        gauge.q.real, gauge.q.imag, gauge.v.real, gauge.v.imag,
    ]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SNAPSHOT_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(",".join(format(float(x), FLOAT_FMT) for x in row) + "\n")


def summarize(traj: Trajectory) -> dict:
    cfg = traj.config
    out = {
        "status": traj.status,
        "marker": traj.marker,
        "message": traj.message,
        "records": len(traj.records),
        "steps": traj.steps,
        "rejected_steps": traj.rejected,
        "max_renormalization": traj.max_correction,
        "predicted_rate": -(cfg.mu**2) / cfg.m**2,
    }
    if traj.records:
        last = traj.records[-1]
        out["final"] = {"t": last.t, "sigma": last.sigma, "theta": last.theta, "x_norm_z": last.x_norm_z}
        out["bootstrap_A1_all"] = all(r.bootstrap_A1_ok for r in traj.records)
        out["bootstrap_A2_all"] = all(r.bootstrap_A2_ok for r in traj.records)
    try:
        rate, r2 = fitted_sigma_rate(traj)
        out["fitted_rate"] = rate
        out["fit_r_squared"] = r2
        out["rate_rel_err"] = abs(rate - out["predicted_rate"]) / abs(out["predicted_rate"])
    except TwistedELError as err:
        out["fitted_rate"] = None
        out["fit_note"] = str(err)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run_outputs(traj: Trajectory, out_dir: Path, started: float) -> dict:
    cfg = traj.config
    files = []
    ts = out_dir / "timeseries.csv"
    write_timeseries(traj, ts)
    files.append(ts)
    if traj.states:
        picks = list(range(0, len(traj.states), cfg.snapshot_every))
        if picks[-1] != len(traj.states) - 1:
            picks.append(len(traj.states) - 1)
        for k in picks:
            st = traj.states[k]
            p = out_dir / snapshot_name(st.t)
            write_snapshot(st, traj.grid, cfg.m, p)
            files.append(p)
    summary = summarize(traj)
    sp = out_dir / "summary.json"
    sp.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files.append(sp)
    if not all(p.exists() for p in files):
        traj.status = "aborted"
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "started": started,
        "finished": time.time(),
        "status": traj.status,
        "marker": traj.marker,
        "files": [{"name": p.name, "sha256": _sha256(p)} for p in files],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _prepare_out_dir(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("")
    probe.unlink()
    return out


def run_command(config_path, out_dir) -> int:
    """Run one configuration; exit 0 completed, 2 breakdown, 1 error."""
    started = time.time()
    try:
        config = load_config(config_path)
    except ConfigError as err:
        log.error("%s", err)
        return EXIT_ERROR
    try:
        out = _prepare_out_dir(out_dir)
    except OSError as err:
        log.error("output directory %s is not writable: %s", out_dir, err)
        return EXIT_ERROR
    try:
        traj = run_simulation(config)
        manifest = write_run_outputs(traj, out, started)
    except OSError as err:
        log.error("writing outputs to %s failed: %s", out, err)
        return EXIT_ERROR
    except TwistedELError as err:
        log.error("run failed: %s", err)
        return EXIT_ERROR
    if manifest["status"] == "breakdown":
        log.warning("decomposition breakdown: %s", traj.message)
        return EXIT_BREAKDOWN
    if manifest["status"] != "completed":
        log.error("run aborted: %s", traj.message)
        return EXIT_ERROR
    if traj.marker:
        log.info("early stop: %s", traj.message)
    return EXIT_OK


# ------------------------------------------------------------------- sweep

SWEEP_AXES = ("m", "mu", "omega", "sigma_in", "z_amplitude")


def expand_sweep(spec: dict) -> list[RunConfig]:
    """Cartesian product of the `grid` lists on top of the `base` settings."""
    if not isinstance(spec, dict):
        raise ConfigError("sweep spec must be a mapping with 'grid' (and optional 'base')")
    unknown = sorted(set(spec) - {"base", "grid"})
    if unknown:
        raise ConfigError(f"unknown sweep key(s): {', '.join(unknown)}")
    base = dict(spec.get("base") or {})
    grid = spec.get("grid") or {}
    bad = sorted(set(grid) - set(SWEEP_AXES))
    if bad:
        raise ConfigError(f"sweep grid axes must be among {SWEEP_AXES}, got {', '.join(bad)}")
    axes = [(k, list(v) if isinstance(v, (list, tuple)) else [v]) for k, v in grid.items()]
    if not axes or any(len(vals) == 0 for _, vals in axes):
        return []
    configs = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        data = dict(base)
        data.update({k: v for (k, _), v in zip(axes, combo)})
        configs.append(config_from_mapping(data, "sweep"))
    return configs


def _sweep_worker(cfg_dict: dict) -> dict:
    cfg = RunConfig(**cfg_dict)
    out = {"m": cfg.m, "mu": cfg.mu, "predicted_rate": -(cfg.mu**2) / cfg.m**2}
    try:
        traj = run_simulation(cfg, keep_states=False)
        rate, _ = fitted_sigma_rate(traj)
        out.update(fitted_rate=rate, rel_err=abs(rate - out["predicted_rate"]) / abs(out["predicted_rate"]), status=traj.status)
    except TwistedELError as err:
        out.update(fitted_rate=float("nan"), rel_err=float("nan"), status=f"failed: {err}")
    return out


def run_sweep(configs: list[RunConfig], parallel: int = 1) -> list[dict]:
    payload = [c.to_dict() for c in configs]
    if parallel <= 1:
        return [_sweep_worker(p) for p in payload]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_sweep_worker, payload))


def sweep_command(spec_path, out_dir, parallel: int = 1) -> int:
    try:
        text = Path(spec_path).read_text()
        configs = expand_sweep(yaml.safe_load(text))
    except (OSError, yaml.YAMLError, ConfigError) as err:
        log.error("bad sweep spec %s: %s", spec_path, err)
        return EXIT_ERROR
    if not configs:
        log.error("sweep grid is empty; nothing to run")
        return EXIT_ERROR
    try:
        out = _prepare_out_dir(out_dir)
    except OSError as err:
        log.error("output directory %s is not writable: %s", out_dir, err)
        return EXIT_ERROR
    results = run_sweep(configs, parallel)
    with open(out / "rates.csv", "w", newline="") as fh:
        fh.write("m,mu,predicted_rate,fitted_rate,rel_err\n")
        for r in results:
            fh.write(",".join([str(r["m"]), _fmt(r["mu"]), _fmt(r["predicted_rate"]), _fmt(r["fitted_rate"]), _fmt(r["rel_err"])]) + "\n")
    failures = [r for r in results if r["status"] != "completed"]
    (out / "sweep_status.json").write_text(json.dumps([r["status"] for r in results], indent=2) + "\n")
    for r in failures:
        log.warning("run m=%s mu=%s: %s", r["m"], r["mu"], r["status"])
    return EXIT_ERROR if failures else EXIT_OK


# --------------------------------------------------------------------- fit


def read_timeseries(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        names = reader.fieldnames or []
    return {name: np.array([float(row[name]) for row in rows]) for name in names}


def parse_window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError as err:
        raise InvalidArgument(f"window must look like t0:t1, got {text!r}") from err
    if lo >= hi:
        raise InvalidArgument("window start must precede its end")
    return lo, hi


def fit_command(path, column: str, window: str) -> tuple[int, str]:
    try:
        data = read_timeseries(path)
        if column not in data:
            return EXIT_ERROR, f"column {column!r} not in {path}"
        rate, r2 = diag.fit_exponential_rate(data["t"], data[column], parse_window(window))
    except (OSError, KeyError, ValueError) as err:
        return EXIT_ERROR, str(err)
    return EXIT_OK, f"rate={rate:.10g} r_squared={r2:.10g}"


# ------------------------------------------------------------------ verify


@dataclass
class Check:
    name: str
    observed: float
    tolerance: float
    passed: bool
    relation: str = "<="


def _check(name, observed, tolerance, relation="<=") -> Check:
    observed = float(observed)
    ok = observed <= tolerance if relation == "<=" else observed >= tolerance
    return Check(name, observed, tolerance, bool(ok and np.isfinite(observed)), relation)


def verify_checks(level: str = "quick") -> list[Check]:
    """Invariant suite; `quick` finishes in well under a minute."""
    if level not in ("quick", "full"):
        raise InvalidArgument("level must be quick or full")
    from . import modulation as mod
    from .profiles import harmonic_profile, oseen_w
    from .grid import integrate_radial, apply_radial_laplacian

    checks = []
    rho_g = make_grid(40.0, 512, "geometric-near-axis")
    for m in (3, 4, 5):
        h1, h3 = harmonic_profile(rho_g.nodes, m)
        checks.append(_check(f"h1^2 + h3^2 = 1 (m={m})", np.max(np.abs(h1**2 + h3**2 - 1.0)), 1e-14))
        exact = 2 * np.pi / (m**2 * np.sin(np.pi / m))
        fine = make_grid(200.0, 4096, "geometric-near-axis")
        h1f, _ = harmonic_profile(fine.nodes, m)
        checks.append(_check(f"int h1^2 rho drho rel. error (m={m})", abs(integrate_radial(h1f**2, fine) - exact) / exact, 1e-4))
        lh = mod.apply_Lh(h1, rho_g, m)
        checks.append(_check(f"L_h h1 = 0 (m={m}, rms)", np.sqrt(integrate_radial(lh**2, rho_g)), 1e-3))

    # adjoint pairing on compactly supported smooth fields
    m = 3
    r = rho_g.nodes
    z = r**3 * np.exp(-(r**2))
    w = r**3 * np.exp(-((r - 1.0) ** 2))
    lhs = integrate_radial(mod.apply_Lh(z, rho_g, m) * w, rho_g)
    rhs = integrate_radial(z * mod.apply_Lh(w, rho_g, m, adjoint=True), rho_g)
    checks.append(_check("adjoint pairing <L_h z, w> = <z, L_h* w>", abs(lhs - rhs), 1e-4))

    # Oseen profile solves W_t = W_rr - W_r / r
    params = ModelParams(m=3, mu=1.0, omega=0.3)
    g = make_grid(20.0, 512, "uniform")
    t, dt = 0.5, 1e-5
    wt = (oseen_w(g.nodes, t + dt, params) - oseen_w(g.nodes, t - dt, params)) / (2 * dt)
    lap = apply_radial_laplacian(oseen_w(g.nodes, t, params), g, -1)
    checks.append(_check("Oseen exactness (max residual)", np.max(np.abs(wt - lap)[:-1]), 1e-3))

    # round trip extraction
    rng = np.random.default_rng(7)
    grid = make_grid(25.0, 512, "geometric-near-axis")
    worst = 0.0
    orth = 0.0
    for _ in range(5 if level == "quick" else 50):
        sigma, theta = rng.uniform(0.3, 1.0), rng.uniform(-np.pi, np.pi)
        zz = make_test_perturbation("bump", rng.uniform(0.0, 0.3), grid.scaled(1 / sigma), 3,
                                    center=rng.uniform(0.8, 3.0), phase=rng.uniform(0, 2 * np.pi))
        frame = ModulationFrame(sigma, theta, zz, grid.nodes / sigma)
        phi = mod.synthesize_director(frame, grid, 3)
        got = extract_modulation(phi, grid, 3, guess=(sigma * 1.05, theta + 0.05))
        worst = max(worst, abs(got.sigma - sigma), abs(np.angle(np.exp(1j * (got.theta - theta)))), np.max(np.abs(got.z - zz)))
        orth = max(orth, abs(mod.orthogonality_integral(got.z, grid, got.sigma, 3)))
    checks.append(_check("round trip (sigma, Theta, z) max error", worst, 1e-8))
    checks.append(_check("orthogonality residual", orth, 1e-10))

    n_lo, n_hi = (128, 256) if level == "quick" else (256, 512)
    for m in ((3,) if level == "quick" else (3, 4)):
        lo = diag.coercivity_spectrum(n_lo, m).minimum
        hi = diag.coercivity_spectrum(n_hi, m).minimum
        checks.append(_check(f"coercivity minimum > 0 (m={m}, n={n_hi})", hi, 0.0, ">="))
        checks.append(_check(f"coercivity n={n_lo} vs {n_hi} rel. change (m={m})", abs(lo - hi) / hi, 0.2))
        free = diag.coercivity_spectrum(n_hi, m, constrained=False)
        checks.append(_check(f"unconstrained minimum ~ 0 (m={m})", free.minimum, 1e-6))

    # static harmonic state: energy identity terms vanish up to discretization
    st = build_initial_data(grid, ModelParams(m=3, mu=1.0))
    gauge = compute_gauge(st.phi, grid, 3)
    e, es, d, f = diag.energy_report(st, gauge, ModelParams(m=3, mu=1.0), grid)
    checks.append(_check("E* of the harmonic profile", es, 1e-8))

    if level == "full":
        ratios = []
        for n_, dt_ in ((256, 2e-4), (511, 1e-4)):
            cfg = RunConfig(m=3, mu=1.0, n=n_, r_max=25.0, dt=dt_, t_end=0.5, output_cadence=50, z_amplitude=1e-2)
            traj = run_simulation(cfg, keep_states=False)
            ratios.append(diag.windowed_energy_residual(traj.times, traj.series("energy_E"), traj.series("dissipation"),
                                                        traj.series("oseen_forcing"), (0.1, 0.5)))
        checks.append(_check("energy identity refinement ratio", ratios[0] / ratios[1], 1.8, ">="))
    return checks


def format_checks(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check'.ljust(width)}  {'observed':>12}  {'tolerance':>12}  result"]
    for c in checks:
        rel = "<=" if c.relation == "<=" else ">="
        lines.append(f"{c.name.ljust(width)}  {c.observed:12.4e}  {rel}{c.tolerance:10.3e}  {'PASS' if c.passed else 'FAIL'}")
    return "\n".join(lines)
