"""Post-hoc certification of instrumented ledgers.

Every estimate under test becomes one CertEntry whose status says how the
claim was established:

    verified                          identity or bound checked with no fitted constant
    verified-with-fitted-constants    bound holds with constants fitted from the data
    hypothesis-failed                 the premise of the bound does not hold on the grid
    violated                          the measured curve breaks the bound
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import curve_fit

from relaxa.analysis.functionals import GAP_TOL
from relaxa.schema.ledger import EnergyLedger
from relaxa.schema.reports import (
    HYPOTHESIS_FAILED,
    VERIFIED,
    VERIFIED_FITTED,
    VIOLATED,
    CertEntry,
    CertificationReport,
    EnvelopeFit,
    GronwallInstance,
    GronwallReport,
)

_LOGGER = logging.getLogger(__name__)

TAIL_FRACTION = 0.2
MIN_SAMPLES = 10


# ---------------------------------------------------------------------------
# Grönwall
# ---------------------------------------------------------------------------

def integral_excess(times: np.ndarray, h: np.ndarray, eta: float) -> float:
    """max over sample pairs s <= t of ∫ₛᵗ h − η(t − s), trapezoid rule."""
    if times.size < 2:
        return 0.0
    g = cumulative_trapezoid(h, times, initial=0.0) - eta * times
    return float(np.max(g - np.minimum.accumulate(g)))


def check_gronwall(inst: GronwallInstance) -> GronwallReport:
    """Check Λ(t) <= Λ(0)eᵐe^{−ηt} + keᵐ/η, only when ∫ₛᵗh <= η(t − s) + m holds."""
    excess = integral_excess(inst.times, inst.h, inst.eta) - inst.m
    if excess > 1e-12 * (1.0 + inst.m):
        _LOGGER.info("%s: integral hypothesis fails by %.3e", inst.name, excess)
        return GronwallReport(inst.name, False, excess, None, math.nan)

    em = math.exp(inst.m)
    t = inst.times - inst.times[0]
    bound = inst.Lam[0] * em * np.exp(-inst.eta * t) + inst.k * em / inst.eta
    slack = 1e-9 * bound + 1e-14
    ok = bool(np.all(inst.Lam <= bound + slack))
    pos = bound > 0.0
    ratio = float(np.max(inst.Lam[pos] / bound[pos])) if np.any(pos) else 0.0
    if not ok:
        _LOGGER.warning("%s: conclusion violated, max ratio %.4g", inst.name, ratio)
    return GronwallReport(inst.name, True, excess, ok, ratio, bound)


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------

def _log_fit(t: np.ndarray, r: np.ndarray) -> tuple[float, float]:
    """(Q, ω) from a least-squares line through log r."""
    keep = r >= 1e-2 * r.max()
    if keep.sum() < 2:
        return float(r.max()), 0.0
    slope, intercept = np.polyfit(t[keep], np.log(r[keep]), 1)
    return float(math.exp(intercept)), float(-slope)


def fit_envelope(
    times,
    curve,
    form: str = "decay_plus_floor",
    slack: float = 0.05,
) -> EnvelopeFit:
    """Fit Q̂e^{−ω̂t} + P̂ as an upper envelope of ``curve``.

    A 2-D ``curve`` is a family of trajectories on one time grid; its
    pointwise maximum is fitted so one triple covers all of them.  The floor
    is the median of the last 20% of samples (zero for ``pure_decay``); Q̂
    is then raised until every sample before the tail lies under the
    envelope with the given slack.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(curve, dtype=float)
    if y.ndim == 2:
        y = y.max(axis=0)
    if y.shape != t.shape:
        raise ValueError(f"curve shape {y.shape} does not match times {t.shape}")
    if t.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {t.size}")
    if form not in ("decay_plus_floor", "pure_decay"):
        raise ValueError(f"unknown envelope form {form!r}")
    notes: list[str] = []
    if form == "pure_decay" and np.any(y <= 0.0):
        notes.append("non-positive samples: switched to floor-subtracted fitting")
        form = "decay_plus_floor"

    n_tail = max(1, int(math.ceil(TAIL_FRACTION * t.size)))
    tail_start = t.size - n_tail
    P = float(np.median(y[tail_start:])) if form == "decay_plus_floor" else 0.0
    r = y - P
    pre = slice(0, tail_start)

    if np.all(r[pre] <= 0.0):
        Q, omega = 0.0, 0.0
    else:
        rp, tp = np.clip(r[pre], 0.0, None), t[pre]
        Q, omega = _log_fit(tp[rp > 0.0], rp[rp > 0.0])
        try:
            (Q_ls, w_ls), _ = curve_fit(
                lambda s, q, w: q * np.exp(-w * s) + P, tp, y[pre],
                p0=(max(Q, 1e-300), omega), maxfev=2000,
            )
            if math.isfinite(Q_ls) and math.isfinite(w_ls) and Q_ls > 0.0:
                Q, omega = float(Q_ls), float(w_ls)
        except (RuntimeError, ValueError) as exc:
            notes.append(f"least-squares refinement skipped: {exc}")

    fitted = Q * np.exp(-omega * t) + P
    scale = float(np.max(np.abs(y))) or 1.0
    residual = float(np.sqrt(np.mean((y - fitted) ** 2)) / scale)

    need = (y[pre] / (1.0 + slack) - P) * np.exp(omega * t[pre])
    if need.size and need.max() > Q:
        Q = float(need.max())
    env = Q * np.exp(-omega * t) + P
    passed = bool(np.all(y <= (1.0 + slack) * env + 1e-14 * scale))
    pos = env > 0.0
    max_ratio = float(np.max(y[pos] / env[pos])) if np.any(pos) else 0.0
    return EnvelopeFit(Q=Q, omega=omega, P=P, residual=residual, passed=passed,
                       form=form, max_ratio=max_ratio, notes=notes)


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

@dataclass
class Targets:
    tol: float = 1e-10                # Newton tolerance of the runs
    defect_tol: float = 1e-8          # reconstruction tolerance of the splittings
    slack: float = 0.05               # envelope slack
    v_eta: float = 0.1                # decay rate in the V_eps differential inequality
    gronwall_eta: float = 0.1         # η in ∫(‖u_t‖² + ‖w_t‖²) <= (η/2)(t − s) + Q


def _const(ledger: EnergyLedger, name: str, default: float = math.nan) -> float:
    return float(ledger.column(name)[0]) if name in ledger else default


def _energy_identity(name: str, L: EnergyLedger, tg: Targets) -> CertEntry:
    eps = _const(L, "eps", 1.0)
    factor = 2.0 if eps > 0.0 else 1.0
    E, D = L.column("energy"), L.column("dissipation")
    cumulative = float(np.max(np.abs(E + factor * D - E[0])))
    steps = float(L.column("steps")[-1]) if "steps" in L else 0.0
    step_max = float(np.nanmax(L.column("step_defect_max"))) if "step_defect_max" in L else 0.0
    per_step_ok = step_max <= 10.0 * tg.tol
    cumulative_ok = cumulative <= max(steps, 1.0) * tg.tol
    status = VERIFIED if per_step_ok and cumulative_ok else VIOLATED
    return CertEntry(
        "energy-identity" if eps > 0.0 else "lyapunov-identity", status,
        {"max_step_defect": step_max, "cumulative_defect": cumulative, "steps": steps},
        name,
    )


def _envelope_entry(estimate: str, name: str, t, curve, tg: Targets,
                    form: str = "decay_plus_floor", need_decay: bool = False) -> CertEntry:
    y = np.asarray(curve, dtype=float)
    if np.all(y == 0.0):
        return CertEntry(estimate, VERIFIED, {"Q": 0.0, "omega": 0.0, "P": 0.0}, name + ": zero curve")
    if y.shape[-1] < MIN_SAMPLES:
        return CertEntry(estimate, HYPOTHESIS_FAILED, {"samples": float(y.shape[-1])},
                         f"{name}: fewer than {MIN_SAMPLES} samples")
    fit = fit_envelope(t, y, form=form, slack=tg.slack)
    detail = {"Q": fit.Q, "omega": fit.omega, "P": fit.P, "residual": fit.residual,
              "max_ratio": fit.max_ratio}
    ok = fit.passed and (fit.omega > 0.0 or not need_decay)
    return CertEntry(estimate, VERIFIED_FITTED if ok else VIOLATED, detail,
                     name + ("" if ok else ": envelope not satisfied"))


def _v_gronwall(name: str, L: EnergyLedger, tg: Targets) -> CertEntry:
    t = L.time_grid
    V = L.column("V_eps")
    h = L.column("ut_sq") + L.column("wt_sq")
    if np.any(V < 0.0):
        return CertEntry("zero-decay-gronwall", HYPOTHESIS_FAILED, {"min_V": float(V.min())},
                         f"{name}: V_eps takes negative values")
    if t.size < 2 or np.all(V == 0.0):
        return CertEntry("zero-decay-gronwall", VERIFIED, {}, f"{name}: trivial")
    dt = np.diff(t)
    num = V[1:] - V[:-1] + tg.v_eta * 0.5 * dt * (V[1:] + V[:-1])
    den = 0.5 * dt * (h[1:] * V[1:] + h[:-1] * V[:-1])
    if np.any((num > 0.0) & (den <= 0.0)):
        return CertEntry("zero-decay-gronwall", HYPOTHESIS_FAILED, {},
                         f"{name}: V grows where the forcing vanishes")
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(den > 0.0, num / den, 0.0)
    Q_hat = max(0.0, float(q.max()))
    g_eta = 0.5 * tg.v_eta
    m = integral_excess(t, Q_hat * h, g_eta)
    rep = check_gronwall(GronwallInstance(t, V, Q_hat * h, g_eta, 0.0, m, name))
    detail = {"Q_eta": Q_hat, "m": m, "max_ratio": rep.max_violation_ratio}
    status = VERIFIED_FITTED if rep.status == VERIFIED else rep.status
    return CertEntry("zero-decay-gronwall", status, detail, name)


def _gronwall_bound(name: str, L: EnergyLedger, tg: Targets) -> CertEntry:
    """Fit Q̂ on the pairs ending in the first half of the run, check the rest against it."""
    t = L.time_grid
    if t.size < 4:
        return CertEntry("gronwall-bound-integral", HYPOTHESIS_FAILED, {"samples": float(t.size)},
                         f"{name}: fewer than 4 samples")
    h = L.column("ut_sq") + L.column("wt_sq")
    g = cumulative_trapezoid(h, t, initial=0.0) - 0.5 * tg.gronwall_eta * t
    excess = g - np.minimum.accumulate(g)
    mid = t.size // 2
    Q_hat, held = float(excess[:mid].max()), float(excess[mid:].max())
    detail = {"Q": Q_hat, "Q_holdout": held}
    if not (math.isfinite(Q_hat) and math.isfinite(held)):
        return CertEntry("gronwall-bound-integral", VIOLATED, detail, name + ": non-finite integral")
    ok = held <= (1.0 + tg.slack) * Q_hat + 1e-12
    return CertEntry("gronwall-bound-integral", VERIFIED_FITTED if ok else VIOLATED, detail,
                     name + ("" if ok else ": held-out pairs exceed the fitted bound"))


def _gap_entries(name: str, L: EnergyLedger) -> list[CertEntry]:
    """One entry per *_gap column: the bound holds when no relative gap is below -GAP_TOL."""
    entries = []
    for col in L.names:
        if not col.endswith("_gap"):
            continue
        gap = L.column(col)
        worst = float(np.nanmin(gap)) if np.any(np.isfinite(gap)) else 0.0
        estimate = col[: -len("_gap")].replace("_", "-") + "-bound"
        entries.append(CertEntry(estimate, VERIFIED if worst >= -GAP_TOL else VIOLATED,
                                 {"min_gap": worst}, name))
    return entries


def _v_equivalence(name: str, L: EnergyLedger) -> CertEntry:
    """Fitted C₁ <= V_ε/‖(v, v_t)‖² <= C₂ against the closed-form ω₂."""
    ratio = L.column("V_ratio")
    omega = _const(L, "V_omega")
    if not np.any(np.isfinite(ratio)):
        return CertEntry("V-equivalence", VERIFIED, {}, name + ": zero difference")
    C1, C2 = float(np.nanmin(ratio)), float(np.nanmax(ratio))
    detail = {"C1": C1, "C2": C2, "omega2": omega}
    if C1 <= 0.0:
        return CertEntry("V-equivalence", HYPOTHESIS_FAILED, detail,
                         f"{name}: V_eps is not positive definite, beta too small")
    return CertEntry("V-equivalence", VERIFIED if C1 >= omega else VERIFIED_FITTED, detail, name)


def _linear_monotone(name: str, L: EnergyLedger, tg: Targets) -> CertEntry:
    """𝒩_ε(ū) is nonincreasing step by step when ε <= 1 and λ >= 2/(7(2 − ε))."""
    rise = float(np.nanmax(L.column("N_eps_rise")))
    eps, lam = _const(L, "eps", 1.0), _const(L, "lam")
    detail = {"max_rise": rise, "eps": eps, "lambda": lam}
    if not (eps <= 1.0 and lam >= 2.0 / (7.0 * (2.0 - eps))):
        return CertEntry("linear-part-monotone", HYPOTHESIS_FAILED, detail,
                         f"{name}: needs eps <= 1 and lambda >= 2/(7(2 - eps))")
    return CertEntry("linear-part-monotone", VERIFIED if rise <= 10.0 * tg.tol else VIOLATED, detail, name)



def certify_run(
    ledgers: Mapping[str, EnergyLedger],
    targets: Optional[Targets] = None,
) -> CertificationReport:
    """One entry per applicable estimate for each ledger, keyed by its columns."""
    tg = targets or Targets()
    report = CertificationReport()
    for name, L in ledgers.items():
        if len(L) == 0:
            continue
        t = L.time_grid
        if "energy" in L and "dissipation" in L:
            report.add(_energy_identity(name, L, tg))
            eps = _const(L, "eps", 1.0)
            if eps > 0.0:
                report.add(_envelope_entry("absorbing-decay", name, t, L.column("phi_sq"), tg))
            else:
                report.add(_envelope_entry("parabolic-dissipative", name, t, L.column("phi_sq"), tg))
                E = L.column("energy")
                mono = float(np.max(np.diff(E))) if E.size > 1 else 0.0
                report.add(CertEntry(
                    "lyapunov-monotone", VERIFIED if mono <= 10.0 * tg.tol else VIOLATED,
                    {"max_increase": mono}, name,
                ))
        if "z_sq" in L:
            defect = float(np.max(L.column("split_defect")))
            report.add(CertEntry("split-reconstruction",
                                 VERIFIED if defect <= tg.defect_tol else VIOLATED,
                                 {"max_defect": defect}, name))
            report.add(_envelope_entry("uniform-decay", name, t, L.column("z_sq"), tg,
                                       form="pure_decay", need_decay=True))
            report.add(_gronwall_bound(name, L, tg))
            if "W_eps" in L:
                report.add(_envelope_entry("W-bounded", name, t, np.abs(L.column("W_eps")), tg))
            if "V_eps" in L:
                report.add(_v_gronwall(name, L, tg))
            if "V_ratio" in L:
                report.add(_v_equivalence(name, L))
        if "alpha" in L:
            alpha = L.column("alpha")
            d0 = _const(L, "initial_distance", 1.0)
            recon = float(np.max(L.column("recon_defect"))) if "recon_defect" in L else 0.0
            if d0 == 0.0:
                report.add(CertEntry("smoothing-contraction", VERIFIED, {"alpha_hat": 0.0},
                                     name + ": identical initial states"))
            else:
                a_min = float(np.min(alpha[1:])) if alpha.size > 1 else math.inf
                ok = a_min < 0.5 and recon <= tg.defect_tol
                report.add(CertEntry(
                    "smoothing-contraction", VERIFIED if ok else VIOLATED,
                    {"alpha_hat": a_min, "recon_defect": recon}, name,
                ))
            if "N_eps_rise" in L:
                report.add(_linear_monotone(name, L, tg))
        for entry in _gap_entries(name, L):
            report.add(entry)
    return report


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------

def report_text(report: CertificationReport) -> str:
    """Structured key-value text, one block per entry."""
    out = io.StringIO()
    out.write(f"entries = {len(report)}\n")
    for status in (VERIFIED, VERIFIED_FITTED, HYPOTHESIS_FAILED, VIOLATED):
        out.write(f"count.{status} = {report.count(status)}\n")
    for i, e in enumerate(report, 1):
        out.write(f"\n[entry {i}]\n")
        out.write(f"estimate = {e.estimate}\n")
        out.write(f"status = {e.status}\n")
        for k, v in e.detail.items():
            out.write(f"detail.{k} = {v!r}\n")
        if e.message:
            out.write(f"source = {e.message}\n")
    return out.getvalue()
