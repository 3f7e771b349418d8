"""Tests for the Grönwall checker, envelope fitting and ledger certification."""
import math

import numpy as np
import pytest

from relaxa.analysis.decomposition import solve_split, split_ledger
from relaxa.analysis.functionals import poincare_constant
from relaxa.analysis.verify import (
    Targets,
    certify_run,
    check_gronwall,
    fit_envelope,
    integral_excess,
    report_text,
)
from relaxa.fem.assembly import assemble
from relaxa.fem.mesh import build_mesh
from relaxa.nonlinearity import doublewell
from relaxa.schema.ledger import EnergyLedger
from relaxa.schema.mesh import Interval
from relaxa.schema.params import FunctionalParams
from relaxa.schema.reports import (
    HYPOTHESIS_FAILED,
    VERIFIED,
    VERIFIED_FITTED,
    VIOLATED,
    CertEntry,
    GronwallInstance,
)
from relaxa.schema.state import HypState, ParState
from relaxa.solver.trajectory import solve_trajectory


def _ledger(times, **columns):
    ledger = EnergyLedger()
    for i, t in enumerate(times):
        ledger.record(float(t), **{k: float(np.asarray(v)[i]) for k, v in columns.items()})
    return ledger


def _estimates(report):
    return [e.estimate for e in report]


# ---------------------------------------------------------------------------
# Grönwall
# ---------------------------------------------------------------------------

def test_integral_excess():
    t = np.linspace(0.0, 2.0, 201)
    assert integral_excess(t, np.zeros_like(t), 1.0) == 0.0
    assert integral_excess(t, np.full_like(t, 3.0), 1.0) == pytest.approx(4.0)
    assert integral_excess(t[:1], t[:1], 1.0) == 0.0


def test_gronwall_closed_form_solution():
    """Λ = ½ + ½e^{−t} solves Λ' + Λ = ½: η = ½, h = 0, k = ½."""
    t = np.linspace(0.0, 10.0, 201)
    inst = GronwallInstance(t, 0.5 + 0.5 * np.exp(-t), np.zeros_like(t), eta=0.5, k=0.5)
    rep = check_gronwall(inst)
    assert rep.hypothesis_ok
    assert rep.conclusion_ok
    assert rep.status == VERIFIED
    assert np.allclose(rep.bound, np.exp(-0.5 * t) + 1.0)
    assert rep.max_violation_ratio <= 1.0


def test_gronwall_growth_is_violated():
    t = np.linspace(0.0, 3.0, 31)
    rep = check_gronwall(GronwallInstance(t, np.exp(t), np.zeros_like(t), eta=0.5))
    assert rep.hypothesis_ok
    assert rep.conclusion_ok is False
    assert rep.status == VIOLATED
    assert rep.max_violation_ratio > 1.0


def test_gronwall_hypothesis_failure():
    t = np.linspace(0.0, 3.0, 31)
    eta = 0.5
    rep = check_gronwall(GronwallInstance(t, np.exp(-t), np.full_like(t, 2.0 * eta), eta=eta))
    assert not rep.hypothesis_ok
    assert rep.conclusion_ok is None
    assert math.isnan(rep.max_violation_ratio)
    assert rep.status == HYPOTHESIS_FAILED
    assert rep.hypothesis_excess == pytest.approx(eta * 3.0)


def test_gronwall_oscillating_forcing():
    """h = η(1 + cos t) has ∫ₛᵗ h − η(t − s) <= 2η."""
    eta = 0.5
    t = np.linspace(0.0, 20.0, 2001)
    inst = GronwallInstance(t, np.exp(-2.0 * t), eta * (1.0 + np.cos(t)), eta=eta, m=2.0 * eta + 1e-3)
    rep = check_gronwall(inst)
    assert rep.hypothesis_ok
    assert rep.conclusion_ok
    assert check_gronwall(GronwallInstance(t, np.exp(-2.0 * t), eta * (1.0 + np.cos(t)),
                                           eta=eta, m=0.5 * eta)).status == HYPOTHESIS_FAILED


@pytest.mark.parametrize("kwargs", [
    {"times": [0.0, 1.0, 1.0], "Lam": [1.0, 1.0, 1.0], "h": [0.0, 0.0, 0.0], "eta": 1.0},
    {"times": [0.0, 1.0], "Lam": [1.0, -1.0], "h": [0.0, 0.0], "eta": 1.0},
    {"times": [0.0, 1.0], "Lam": [1.0, 1.0], "h": [0.0], "eta": 1.0},
    {"times": [0.0, 1.0], "Lam": [1.0, 1.0], "h": [0.0, 0.0], "eta": 0.0},
])
def test_gronwall_instance_validation(kwargs):
    with pytest.raises(ValueError):
        GronwallInstance(**kwargs)


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------

def test_envelope_recovers_decay_plus_floor():
    t = np.linspace(0.0, 5.0, 101)
    fit = fit_envelope(t, 3.0 * np.exp(-2.0 * t) + 1.0)
    assert fit.passed
    assert fit.Q == pytest.approx(3.0, abs=0.05)
    assert fit.omega == pytest.approx(2.0, abs=0.05)
    assert fit.P == pytest.approx(1.0, abs=1e-2)
    assert fit.residual < 1e-2
    assert fit.max_ratio <= 1.05


def test_envelope_of_constant_curve():
    t = np.linspace(0.0, 1.0, 20)
    fit = fit_envelope(t, np.full_like(t, 2.0))
    assert fit.passed
    assert fit.Q == 0.0
    assert fit.P == 2.0
    assert fit.residual == 0.0


def test_growing_curve_fails():
    t = np.linspace(0.0, 5.0, 51)
    assert not fit_envelope(t, np.exp(t)).passed


def test_pure_decay_switches_on_nonpositive_samples():
    t = np.linspace(0.0, 5.0, 51)
    fit = fit_envelope(t, np.exp(-t) - 0.5, form="pure_decay")
    assert fit.form == "decay_plus_floor"
    assert fit.notes and "switched" in fit.notes[0]


def test_pure_decay_fit():
    t = np.linspace(0.0, 5.0, 51)
    fit = fit_envelope(t, 2.0 * np.exp(-t), form="pure_decay")
    assert fit.passed
    assert fit.P == 0.0
    assert fit.omega == pytest.approx(1.0, abs=1e-3)
    assert np.all(fit.envelope(t) > 0.0)


def test_family_is_reduced_to_its_maximum():
    t = np.linspace(0.0, 5.0, 51)
    family = np.array([np.exp(-t), 2.0 * np.exp(-t)])
    fit = fit_envelope(t, family, form="pure_decay")
    assert fit.Q >= 2.0 / 1.05 - 1e-9


@pytest.mark.parametrize("times,curve,form", [
    (np.arange(5.0), np.ones(5), "decay_plus_floor"),
    (np.arange(12.0), np.ones(11), "decay_plus_floor"),
    (np.arange(12.0), np.ones(12), "power_law"),
])
def test_envelope_rejects_bad_input(times, curve, form):
    with pytest.raises(ValueError):
        fit_envelope(times, curve, form=form)


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

def test_empty_input():
    assert len(certify_run({})) == 0
    assert len(certify_run({"empty": EnergyLedger()})) == 0


def test_zero_run_is_verified(interval_ops):
    zero = np.zeros(interval_ops.n_nodes)
    record = solve_trajectory("hyperbolic", HypState(zero, zero, 0.0, 1.0), 1.0, 0.05, interval_ops,
                              doublewell(1.0))
    report = certify_run({"zero": record.ledger})
    assert _estimates(report) == ["energy-identity", "absorbing-decay"]
    assert report.count(VERIFIED) == 2
    assert not report.any_violated


def test_parabolic_run_entries(interval_ops, dw, rng):
    init = ParState(rng.normal(size=interval_ops.n_nodes))
    record = solve_trajectory("parabolic", init, 1.0, 0.01, interval_ops, dw)
    report = certify_run({"par": record.ledger})
    by_name = {e.estimate: e for e in report}
    assert set(by_name) == {"lyapunov-identity", "parabolic-dissipative", "lyapunov-monotone"}
    assert by_name["lyapunov-identity"].status == VERIFIED
    assert by_name["lyapunov-monotone"].status == VERIFIED


def test_broken_energy_balance_is_violated():
    t = [0.0, 0.1, 0.2]
    ledger = _ledger(t, phi_sq=[1.0, 0.9, 0.8], energy=[1.0, 0.9, 0.8], dissipation=[0.0, 0.0, 0.0])
    report = certify_run({"broken": ledger})
    by_name = {e.estimate: e for e in report}
    assert by_name["energy-identity"].status == VIOLATED
    assert by_name["absorbing-decay"].status == HYPOTHESIS_FAILED
    assert report.any_violated


def test_split_ledger_certification():
    t = np.linspace(0.0, 10.0, 51)
    zeros = np.zeros_like(t)
    ledger = _ledger(t, z_sq=4.0 * np.exp(-t), split_defect=zeros, ut_sq=zeros, wt_sq=zeros,
                     V_eps=2.0 * np.exp(-t), W_eps=zeros)
    report = certify_run({"split": ledger})
    assert _estimates(report) == [
        "split-reconstruction", "uniform-decay", "gronwall-bound-integral", "W-bounded",
        "zero-decay-gronwall",
    ]
    assert [e.status for e in report] == [VERIFIED, VERIFIED_FITTED, VERIFIED_FITTED, VERIFIED,
                                          VERIFIED_FITTED]


def test_split_ledger_failures():
    t = np.linspace(0.0, 2.0, 21)
    zeros = np.zeros_like(t)
    ledger = _ledger(t, z_sq=np.exp(t), split_defect=np.full_like(t, 1e-3), ut_sq=zeros,
                     wt_sq=zeros, V_eps=-np.ones_like(t))
    by_name = {e.estimate: e for e in certify_run({"bad": ledger})}
    assert by_name["split-reconstruction"].status == VIOLATED
    assert by_name["uniform-decay"].status == VIOLATED
    assert by_name["zero-decay-gronwall"].status == HYPOTHESIS_FAILED


def test_contraction_entries():
    t = [0.0, 0.5, 1.0]
    good = _ledger(t, alpha=[1.0, 0.7, 0.4], initial_distance=[1.0] * 3, recon_defect=[0.0] * 3)
    slow = _ledger(t, alpha=[1.0, 0.9, 0.8], initial_distance=[1.0] * 3, recon_defect=[0.0] * 3)
    same = _ledger([0.0], alpha=[0.0], initial_distance=[0.0], recon_defect=[0.0])
    report = certify_run({"good": good, "slow": slow, "same": same})
    assert [e.status for e in report] == [VERIFIED, VIOLATED, VERIFIED]
    assert report.entries[0].detail["alpha_hat"] == 0.4


def test_defect_tolerance_comes_from_targets():
    t = [0.0, 0.5, 1.0]
    ledger = _ledger(t, alpha=[1.0, 0.7, 0.4], initial_distance=[1.0] * 3, recon_defect=[1e-6] * 3)
    assert certify_run({"x": ledger}).any_violated
    assert not certify_run({"x": ledger}, Targets(defect_tol=1e-5)).any_violated


def test_report_text_layout():
    t = [0.0, 0.5, 1.0]
    ledger = _ledger(t, alpha=[1.0, 0.7, 0.4], initial_distance=[1.0] * 3, recon_defect=[0.0] * 3)
    text = report_text(certify_run({"runs/difference_ledger.csv": ledger}))
    lines = text.splitlines()
    assert lines[0] == "entries = 1"
    assert "count.verified = 1" in lines
    assert "count.violated = 0" in lines
    assert "[entry 1]" in lines
    assert "estimate = smoothing-contraction" in lines
    assert "status = verified" in lines
    assert "detail.alpha_hat = 0.4" in lines
    assert "source = runs/difference_ledger.csv" in lines


def test_unknown_status_is_rejected():
    with pytest.raises(ValueError):
        CertEntry("energy-identity", "probably")


def _split_columns(t, ut_sq):
    zeros = np.zeros_like(t)
    return dict(z_sq=np.exp(-t), split_defect=zeros, ut_sq=ut_sq, wt_sq=zeros)


def test_gronwall_bound_holds_for_decaying_forcing():
    t = np.linspace(0.0, 10.0, 51)
    entry = {e.estimate: e for e in certify_run({"s": _ledger(t, **_split_columns(t, np.exp(-t)))})}
    bound = entry["gronwall-bound-integral"]
    assert bound.status == VERIFIED_FITTED
    assert bound.detail["Q"] == pytest.approx(0.8, abs=0.02)
    assert bound.detail["Q_holdout"] < bound.detail["Q"]


def test_gronwall_bound_catches_late_growth():
    t = np.linspace(0.0, 10.0, 51)
    ut_sq = np.where(t >= 5.0, 5.0, 0.0)
    entry = {e.estimate: e for e in certify_run({"s": _ledger(t, **_split_columns(t, ut_sq))})}
    bound = entry["gronwall-bound-integral"]
    assert bound.status == VIOLATED
    assert bound.detail["Q"] == 0.0
    assert bound.detail["Q_holdout"] > 1.0


def test_gronwall_bound_needs_samples():
    t = np.array([0.0, 1.0, 2.0])
    entry = {e.estimate: e for e in certify_run({"s": _ledger(t, **_split_columns(t, np.ones(3)))})}
    assert entry["gronwall-bound-integral"].status == HYPOTHESIS_FAILED


def test_w_bounded_uses_an_envelope():
    t = np.linspace(0.0, 10.0, 51)
    ledger = _ledger(t, **_split_columns(t, np.exp(-t)), W_eps=-3.0 - 2.0 * np.exp(-t))
    entry = {e.estimate: e for e in certify_run({"s": ledger})}["W-bounded"]
    assert entry.status == VERIFIED_FITTED
    assert entry.detail["P"] == pytest.approx(3.0, abs=1e-3)


def test_cumulative_energy_tolerance_scales_with_steps():
    t = [0.0, 0.1, 0.2]
    base = dict(phi_sq=[1.0] * 3, dissipation=[0.0] * 3, steps=[0.0, 5.0, 10.0], step_defect_max=[0.0] * 3)
    loose = _ledger(t, energy=[1.0, 1.0, 1.0 + 5e-9], **base)
    tight = _ledger(t, energy=[1.0, 1.0, 1.0 + 5e-10], **base)
    assert {e.estimate: e for e in certify_run({"x": loose})}["energy-identity"].status == VIOLATED
    assert {e.estimate: e for e in certify_run({"x": tight})}["energy-identity"].status == VERIFIED


def test_gap_columns_become_bound_entries():
    t = [0.0, 0.5, 1.0]
    ledger = _ledger(t, E_lower_gap=[0.1, 0.0, -1e-6], E_upper_gap=[0.2, 0.1, 0.05])
    report = certify_run({"gaps": ledger})
    assert _estimates(report) == ["E-lower-bound", "E-upper-bound"]
    assert [e.status for e in report] == [VIOLATED, VERIFIED]
    assert report.entries[0].detail["min_gap"] == -1e-6


@pytest.mark.parametrize("ratios,status", [
    ([math.nan, 0.5, 0.8], VERIFIED),
    ([math.nan, 0.1, 0.8], VERIFIED_FITTED),
    ([0.4, -0.2, 0.8], HYPOTHESIS_FAILED),
])
def test_v_equivalence(ratios, status):
    t = np.array([0.0, 0.5, 1.0])
    ledger = _ledger(t, **_split_columns(t, np.zeros(3)), V_ratio=ratios, V_omega=[0.3] * 3)
    entry = {e.estimate: e for e in certify_run({"s": ledger})}["V-equivalence"]
    assert entry.status == status


@pytest.mark.parametrize("rise,lam,status", [
    (0.0, 1.7, VERIFIED),
    (1e-6, 1.7, VIOLATED),
    (0.0, 0.1, HYPOTHESIS_FAILED),
])
def test_linear_part_monotone(rise, lam, status):
    t = [0.0, 0.5, 1.0]
    ledger = _ledger(t, alpha=[1.0, 0.7, 0.4], initial_distance=[1.0] * 3, recon_defect=[0.0] * 3,
                     N_eps_rise=[0.0, rise, 0.0], eps=[1.0] * 3, lam=[lam] * 3)
    entry = {e.estimate: e for e in certify_run({"d": ledger})}["linear-part-monotone"]
    assert entry.status == status


@pytest.mark.slow
def test_split_run_certifies_v_and_psi_estimates():
    ops = assemble(build_mesh(Interval(0.0, 1.0), 32))
    spec = doublewell(1.0)
    lam, _ = poincare_constant(ops)
    eps, beta = 0.5, 12.0
    n = ops.n_nodes
    phi0 = HypState(np.ones(n), np.zeros(n), 0.0, eps)
    split = solve_split(phi0, 20.0, ops.mesh.h_max / 4.0, ops, spec, beta=beta, stride=20, with_h=True)
    params = FunctionalParams.defaults(lam, eps, beta, window="V")
    report = certify_run({"split": split_ledger(split, params, ops, spec)})
    status = {e.estimate: e.status for e in report}
    assert status["split-reconstruction"] == VERIFIED
    assert status["Psi-lower-bound"] == VERIFIED
    assert status["Psi-upper-bound"] == VERIFIED
    assert status["V-equivalence"] in (VERIFIED, VERIFIED_FITTED)
    assert status["gronwall-bound-integral"] == VERIFIED_FITTED
    assert status["W-bounded"] in (VERIFIED, VERIFIED_FITTED)
    assert status["zero-decay-gronwall"] != VIOLATED
