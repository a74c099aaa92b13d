import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twisted_el import diagnostics as diag
from twisted_el.errors import (
    InsufficientSamples,
    InsufficientWindow,
    NonpositiveValue,
)
from twisted_el.gauge import compute_gauge
from twisted_el.grid import integrate_radial, make_grid
from twisted_el.profiles import ModelParams, build_initial_data, gaussian_v, make_test_perturbation


def test_fit_exact_exponential_and_constant():
    t = np.linspace(0, 3, 31)
    rate, r2 = diag.fit_exponential_rate(t, np.exp(-t / 9), (0.5, 3))
    assert rate == pytest.approx(-1 / 9, rel=1e-12) and r2 == pytest.approx(1.0)
    rate, r2 = diag.fit_exponential_rate(t, np.full(t.size, 2.5), (0, 3))
    assert rate == pytest.approx(0.0, abs=1e-14) and r2 == 1.0


def test_fit_errors():
    t = np.linspace(0, 1, 5)
    with pytest.raises(InsufficientSamples):
        diag.fit_exponential_rate(t, np.ones(5), (0, 1))
    t = np.linspace(0, 1, 20)
    with pytest.raises(NonpositiveValue):
        diag.fit_exponential_rate(t, t - 0.5, (0, 1))


def test_decay_bound_examples():
    t = np.linspace(0, 3, 31)
    c, ok = diag.decay_bound_check(t, 1 / (1 + t), -1)
    assert c == pytest.approx(1.0) and ok
    c, ok = diag.decay_bound_check(t, (1 + t) ** -0.5, -1)
    assert not ok
    with pytest.raises(InsufficientSamples):
        diag.decay_bound_check(t[:3], t[:3], -1)


@settings(max_examples=30, deadline=None)
@given(exponent=st.floats(-2, -0.1), amp=st.floats(1e-6, 10), extra=st.floats(0, 2))
def test_decay_faster_than_bound_passes(exponent, amp, extra):
    t = np.linspace(0, 4, 41)
    vals = amp * (1 + t) ** (exponent - extra)
    c, ok = diag.decay_bound_check(t, vals, exponent)
    assert ok and c == pytest.approx(amp)


def test_bootstrap_checks():
    p = ModelParams(m=3, mu=1.0, sigma_in=0.5)

    class R:
        t = 0.0
        sigma = 0.5
        v2_l2 = 0.0

    assert diag.bootstrap_assumption_check(R, p, 0.2, 0.1) == (True, True)
    R.t = 1.0
    R.sigma = 2 * np.exp(-1 / 9) * 0.5
    R.v2_l2 = 1.0
    assert diag.bootstrap_assumption_check(R, p, 0.1, 0.1) == (False, False)


def test_self_similar_variables():
    p = ModelParams(m=3, mu=2.0)
    lam, s, y = diag.self_similar_variables(0.0, 1.0, p)
    assert lam == pytest.approx(0.5) and s == 0.0 and y == pytest.approx(2.0)
    lam, s, _ = diag.self_similar_variables(1.0, 1.0, p)
    assert s == pytest.approx(4.5 * (np.exp(8 / 9) - 1))


class TestEnergies:
    grid = make_grid(25.0, 1024, "geometric-near-axis")

    def test_profile_energy(self):
        p = ModelParams(m=3, mu=1.3, sigma_in=0.5)
        s = build_initial_data(self.grid, p)
        g = compute_gauge(s.phi, self.grid, 3)
        e, es, d, f = diag.energy_report(s, g, p, self.grid)
        closed = 2 * np.pi / (9 * np.sin(np.pi / 3))
        assert es < 1e-9
        assert e == pytest.approx(1.3**2 * 0.25 * closed, rel=1e-4)
        assert f == 0.0

    def test_decomposition_and_signs(self):
        p = ModelParams(m=3, mu=1.0, omega=0.3)
        z = make_test_perturbation("bump", 0.05, self.grid.scaled(2.0), 3)
        s = build_initial_data(self.grid, p, z_in=z, v_in=gaussian_v(self.grid, 1e-3))
        g = compute_gauge(s.phi, self.grid, 3)
        e, es, d, f = diag.energy_report(s, g, p, self.grid)
        assert e >= es >= 0 and d >= 0
        assert e - es == pytest.approx(integrate_radial(np.abs(g.v) ** 2, self.grid), rel=1e-12)


def test_energy_identity_residual_window_rules():
    with pytest.raises(InsufficientWindow):
        diag.energy_identity_residual([0, 1], [1, 1], [0, 0], [0, 0])
    with pytest.raises(InsufficientWindow):
        diag.energy_identity_residual([0, 1, 3], [1, 1, 1], [0, 0, 0], [0, 0, 0])
    assert diag.energy_identity_residual([0, 1, 2], [1, 1, 1], [0, 0, 0], [0, 0, 0]) == 0.0
    # E = e^{-2t}: 1/2 E' + E = 0
    t = np.array([0.9, 1.0, 1.1])
    e = np.exp(-2 * t)
    assert diag.energy_identity_residual(t, e, e, 0 * e) < 1e-3


def test_windowed_residual_exact_pair():
    t = np.linspace(0, 1, 201)
    e = np.exp(-2 * t)
    assert diag.windowed_energy_residual(t, e, e, 0 * e, (0.1, 0.9)) < 1e-5


def test_time_derivative_nonuniform():
    t = np.array([0.0, 0.1, 0.25, 0.3, 0.5])
    d = diag.time_derivative(t, t**2)
    assert np.isnan(d[0]) and np.isnan(d[-1])
    assert np.allclose(d[1:-1], 2 * t[1:-1])


@pytest.mark.parametrize("m,expected", [(3, 0.7703), (4, 0.8647)])
def test_coercivity_minimum_frozen(m, expected):
    # frozen from the dense generalized eigensolve at n = 512 on [0, 40]
    res = diag.coercivity_spectrum(512, m)
    assert res.minimum == pytest.approx(expected, abs=2e-3)
    free = diag.coercivity_spectrum(512, m, constrained=False)
    assert free.minimum < 1e-6
    assert diag.kernel_alignment(free.vector, free.rho, m) < 1e-6


def test_norm_equivalence_family():
    grid = make_grid(25.0, 512, "geometric-near-axis")
    from twisted_el.modulation import ModulationFrame, extract_modulation, synthesize_director, x_norm

    fam = []
    for k, sigma in enumerate((0.4, 0.5, 0.7)):
        rg = grid.scaled(1 / sigma)
        z = make_test_perturbation(("bump", "real", "imag")[k], 1e-3, rg, 3)
        z *= 1e-3 / x_norm(z, rg)
        phi = synthesize_director(ModulationFrame(sigma, 0.1, z, rg.nodes), grid, 3)
        fam.append((phi, grid, extract_modulation(phi, grid, 3, (sigma, 0.1)), 3))
    lo, hi = diag.norm_equivalence(fam)
    assert 0 < lo <= hi < 10 * lo
