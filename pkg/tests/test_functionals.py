"""Tests for the Lyapunov functionals, rates, β defaults and parameter windows."""
import math

import numpy as np
import pytest

from relaxa.analysis.functionals import (
    GAP_TOL,
    E_eps,
    FunctionalSuite,
    SandwichBounds,
    default_beta,
    energy_observer,
    equivalence_constants,
    poincare_constant,
    rates,
    relative_gap,
    sandwich_report,
)
from relaxa.nonlinearity import check_assumptions, linear
from relaxa.schema.params import FunctionalParams, ParamsError
from relaxa.schema.state import HypState


def _dense(ops):
    return ops.robin.toarray(), ops.M_omega.toarray(), ops.K.toarray(), ops.M_gamma.toarray()


@pytest.fixture
def params(interval_ops):
    lam, _ = poincare_constant(interval_ops)
    return FunctionalParams.defaults(lam, 0.5, 4.0, window="V")


# ---------------------------------------------------------------------------
# Functionals against dense formulas
# ---------------------------------------------------------------------------

def test_E_eps_formula(interval_ops, dw, params, rng):
    A, M, _, _ = _dense(interval_ops)
    m = interval_ops.lumped
    u, v = rng.normal(size=(2, interval_ops.n_nodes))
    expected = u @ A @ u + params.eps * (v @ M @ v) + params.alpha * params.eps * (v @ M @ u) \
        + 2.0 * (m @ dw.F(u))
    suite = FunctionalSuite(interval_ops, dw)
    assert suite.E_eps(u, v, params) == pytest.approx(expected, rel=1e-12)
    phi = HypState(u, v, 0.0, params.eps)
    assert E_eps(phi, params, interval_ops, dw) == pytest.approx(expected, rel=1e-12)


def test_V_eps_formula(interval_ops, dw, params, rng):
    A, M, _, _ = _dense(interval_ops)
    m = interval_ops.lumped
    u, w, vf, vt = rng.normal(size=(4, interval_ops.n_nodes))
    psi = dw.with_beta(params.beta).psi
    spec = dw.with_beta(params.beta)
    expected = (
        params.eps * (vt @ M @ vt)
        + params.alpha * params.eps * (vt @ M @ vf)
        + vf @ A @ vf
        + 2.0 * (m @ ((psi(u) - psi(w)) * vf))
        - m @ (psi.deriv()(u) * vf * vf)
    )
    assert FunctionalSuite(interval_ops, spec).V_eps(u, w, vf, vt, params) == pytest.approx(expected, rel=1e-10)


def test_Psi_eps_and_W_eps_formulas(interval_ops, dw, params, rng):
    A, M, _, _ = _dense(interval_ops)
    m = interval_ops.lumped
    spec = dw.with_beta(params.beta)
    suite = FunctionalSuite(interval_ops, spec)
    h, ht, w, wt, u = rng.normal(size=(5, interval_ops.n_nodes))
    psi_expected = (
        params.eps * (ht @ M @ ht)
        + params.alpha * params.eps * (ht @ M @ h)
        + h @ A @ h
        + m @ (spec.psi.deriv()(w) * h * h)
    )
    assert suite.Psi_eps(h, ht, w, params) == pytest.approx(psi_expected, rel=1e-10)
    w_expected = w @ A @ w + params.eps * (wt @ M @ wt) + 2.0 * (m @ spec.Psi(w)) \
        - 2.0 * params.beta * (m @ (u * w))
    assert suite.W_eps(w, wt, u, params) == pytest.approx(w_expected, rel=1e-10)


def test_N_eps_formula(interval_ops, dw, params, rng):
    _, M, K, Mg = _dense(interval_ops)
    ub, ubt = rng.normal(size=(2, interval_ops.n_nodes))
    expected = params.eps * (ubt @ M @ ubt) + params.eps * (ubt @ M @ ub) + ub @ K @ ub + ub @ Mg @ ub
    assert FunctionalSuite(interval_ops, dw).N_eps(ub, ubt, params) == pytest.approx(expected, rel=1e-12)


def test_functionals_vanish_at_zero(interval_ops, dw, params):
    z = np.zeros(interval_ops.n_nodes)
    suite = FunctionalSuite(interval_ops, dw.with_beta(params.beta))
    assert suite.E_eps(z, z, params) == 0.0
    assert suite.V_eps(z, z, z, z, params) == 0.0
    assert suite.Psi_eps(z, z, z, params) == 0.0
    assert suite.W_eps(z, z, z, params) == 0.0
    assert suite.N_eps(z, z, params) == 0.0


def test_energy_observer(interval_ops, dw, params, rng):
    u, v = rng.normal(size=(2, interval_ops.n_nodes))
    observe = energy_observer(interval_ops, dw, params)
    out = observe(0.3, u, v)
    assert list(out) == ["E_eps"]
    assert out["E_eps"] == FunctionalSuite(interval_ops, dw).E_eps(u, v, params)


# ---------------------------------------------------------------------------
# Rates and β
# ---------------------------------------------------------------------------

def test_rates_closed_forms():
    p = FunctionalParams(alpha=0.5, eta=1.0, beta=2.0, eps=1.0, lam=2.0, mu=1.0, window="Psi")
    r = rates(p)
    assert r["omega3"] == pytest.approx(0.25)
    assert r["omega6"] == pytest.approx(0.75)
    assert r["omega2"] == pytest.approx(min(0.75, 0.5 - 0.125))
    assert r["omega7"] is None
    assert rates(p, Q=1.0)["omega5"] == pytest.approx(1.0 + 0.125 + 0.5)


@pytest.mark.parametrize("eta", [0.25, 2.0, 3.0])
def test_omega6_outside_its_window(eta):
    p = FunctionalParams(alpha=0.1, eta=eta, beta=2.0, eps=1.0, lam=2.0, mu=1.0, window="V")
    assert rates(p)["omega6"] is None


def test_default_beta(dw):
    assert default_beta(dw, 1.0) == pytest.approx(8.0)
    assert default_beta(dw, 0.0) == pytest.approx(5.0)
    assert default_beta(dw, -1.0) == default_beta(dw, 1.0)
    assert default_beta(dw, 1.0) >= dw.theta


# ---------------------------------------------------------------------------
# Parameter windows
# ---------------------------------------------------------------------------

def test_params_defaults():
    p = FunctionalParams.defaults(2.0, 1.0, 3.0)
    assert p.mu == 1.0
    assert p.eta == pytest.approx(0.51)
    assert p.alpha == pytest.approx(1.8)
    assert FunctionalParams.defaults(2.0, 1.0, 3.0, window="V").alpha == pytest.approx(1.8)
    assert FunctionalParams.defaults(2.0, 1.0, 3.0, window="Psi").alpha == pytest.approx(0.9)
    assert FunctionalParams.defaults(2.0, 1.0, 3.0, window="W").alpha == 1.0


def test_for_window_keeps_problem_constants():
    p = FunctionalParams.defaults(2.0, 0.3, 3.0, mu=0.8)
    q = p.for_window("Psi")
    assert (q.lam, q.mu, q.beta, q.eps) == (2.0, 0.8, 3.0, 0.3)
    assert q.window == "Psi"
    assert 0.25 < q.eta < 2.0


@pytest.mark.parametrize("kwargs", [
    {"alpha": 0.5, "eta": 1.0, "beta": 2.0, "eps": 1.0, "lam": 0.0, "mu": 1.0},
    {"alpha": 0.5, "eta": 1.0, "beta": 2.0, "eps": 1.0, "lam": 2.0, "mu": 3.0},
    {"alpha": 0.5, "eta": 1.0, "beta": 2.0, "eps": 1.5, "lam": 2.0, "mu": 1.0},
    {"alpha": 0.5, "eta": 0.4, "beta": 2.0, "eps": 1.0, "lam": 2.0, "mu": 1.0},
    {"alpha": 2.0, "eta": 1.0, "beta": 2.0, "eps": 1.0, "lam": 2.0, "mu": 1.0},
    {"alpha": 0.5, "eta": 2.5, "beta": 2.0, "eps": 1.0, "lam": 2.0, "mu": 1.0, "window": "Psi"},
    {"alpha": 0.5, "eta": 1.0, "beta": 2.0, "eps": 1.0, "lam": 2.0, "mu": 1.0, "window": "Z"},
])
def test_params_outside_window(kwargs):
    with pytest.raises(ParamsError):
        FunctionalParams(**kwargs)


# ---------------------------------------------------------------------------
# Sandwich bounds
# ---------------------------------------------------------------------------

def test_N_eps_equivalence_holds(interval_ops, params, rng):
    spec = linear(0.0)
    report = check_assumptions(spec, params.lam)
    U = rng.normal(size=(6, interval_ops.n_nodes))
    V = rng.normal(size=(6, interval_ops.n_nodes))
    checks = {c.name: c for c in sandwich_report(interval_ops, spec, params, report, U, V)}
    assert set(checks) == {"E_eps_lower", "E_eps_upper", "N_eps_equivalence"}
    assert checks["E_eps_upper"].ok
    n = checks["N_eps_equivalence"]
    assert n.ok
    assert n.lower <= n.min_ratio <= n.max_ratio <= n.upper


def test_equivalence_constants():
    lo, hi = equivalence_constants(np.array([2.0, 4.0, 0.0]), np.array([1.0, 2.0, 0.0]))
    assert (lo, hi) == (2.0, 2.0)
    lo, hi = equivalence_constants(np.zeros(3), np.zeros(3))
    assert math.isnan(lo) and math.isnan(hi)


def test_relative_gap_sign():
    assert relative_gap(1.0, 2.0) == pytest.approx(0.25)
    assert relative_gap(2.0, 1.0) < 0.0
    assert relative_gap(0.0, 0.0) == 0.0


def test_energy_bounds_hold_on_random_states(interval_ops, dw, params, rng):
    report = check_assumptions(dw, params.lam, mu=params.mu)
    bounds = SandwichBounds(interval_ops, dw, params, report.c2)
    for _ in range(20):
        u, v = rng.normal(scale=2.0, size=(2, interval_ops.n_nodes))
        lower, upper = bounds.e_gaps(u, v)
        assert lower >= -GAP_TOL and upper >= -GAP_TOL
    assert 0.0 < bounds.e_lo <= 1.0 <= bounds.e_hi


def test_energy_upper_gap_for_linear_zero(interval_ops, params):
    """f = 0, v = 0: E_ε = ‖u‖₁² and the upper gap is (e₊ − 1)‖u‖₁² relative."""
    bounds = SandwichBounds(interval_ops, linear(0.0), params)
    u = np.ones(interval_ops.n_nodes)
    h1 = float(u @ (interval_ops.robin @ u))
    _, upper = bounds.e_gaps(u, np.zeros_like(u))
    assert upper == pytest.approx(relative_gap(h1, bounds.e_hi * h1), rel=1e-12)


def test_psi_and_n_bounds_hold(interval_ops, dw, params, rng):
    spec = dw.with_beta(params.beta)
    bounds = SandwichBounds(interval_ops, spec, params)
    for _ in range(20):
        h, ht, w = rng.normal(size=(3, interval_ops.n_nodes))
        assert min(bounds.psi_gaps(h, ht, w)) >= -GAP_TOL
        assert min(bounds.n_gaps(h, ht)) >= -GAP_TOL
    assert bounds.n_lo > 0.0 and bounds.psi_lo > 0.0


def test_v_ratio(interval_ops, dw, params, rng):
    spec = dw.with_beta(params.beta)
    bounds = SandwichBounds(interval_ops, spec, params)
    u, w, vf, vt = rng.normal(size=(4, interval_ops.n_nodes))
    expected = FunctionalSuite(interval_ops, spec).V_eps(u, w, vf, vt, params) \
        / (params.eps * float(vt @ (interval_ops.M_omega @ vt)) + float(vf @ (interval_ops.robin @ vf)))
    assert bounds.v_ratio(u, w, vf, vt) == pytest.approx(expected, rel=1e-12)
    z = np.zeros(interval_ops.n_nodes)
    assert math.isnan(bounds.v_ratio(u, w, z, z))
    assert bounds.v_omega == rates(params)["omega2"]


def test_energy_observer_with_bounds(interval_ops, dw, params, rng):
    report = check_assumptions(dw, params.lam, mu=params.mu)
    observe = energy_observer(interval_ops, dw, params, SandwichBounds(interval_ops, dw, params, report.c2))
    u, v = rng.normal(size=(2, interval_ops.n_nodes))
    out = observe(0.0, u, v)
    assert list(out) == ["E_eps", "E_lower_gap", "E_upper_gap"]
    assert min(out["E_lower_gap"], out["E_upper_gap"]) >= -GAP_TOL


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.01])
def test_energy_of_constant_state(interval_ops, eps):
    lam, _ = poincare_constant(interval_ops)
    p = FunctionalParams.defaults(lam, eps, 0.0)
    n = interval_ops.n_nodes
    phi = HypState(np.ones(n), np.zeros(n), 0.0, eps)
    assert E_eps(phi, p, interval_ops, linear(0.0)) == pytest.approx(2.0, rel=1e-12)
