"""Z/K splitting u = v + w and the ū + v̄ splitting of trajectory differences.

All coupled systems are marched in lockstep with one MidpointScheme so each
auxiliary step sees the exact increments of the trajectories driving it.
With the shifted discrete gradient dgΨ(a, b) = dgF(a, b) + β(a + b)/2 the
v- and w-steps add up to the u-step, so u = v + w holds to Newton tolerance.
"""
from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from relaxa.analysis.functionals import FunctionalSuite, SandwichBounds, poincare_constant
from relaxa.fem.norms import NormSuite
from relaxa.nonlinearity import (
    discrete_gradient,
    discrete_gradient_db,
    shifted_gradient,
    shifted_gradient_db,
)
from relaxa.schema.ledger import EnergyLedger
from relaxa.schema.mesh import Operators
from relaxa.schema.nonlinearity import NonlinearitySpec
from relaxa.schema.params import FunctionalParams
from relaxa.schema.reports import DifferenceSplit, SplitTrajectory
from relaxa.schema.state import HypState
from relaxa.solver.stepper import DEFAULT_MAX_NEWTON, DEFAULT_TOL, MidpointScheme
from relaxa.solver.trajectory import step_count, solve_trajectory

_LOGGER = logging.getLogger(__name__)

T_STAR_STEP = 0.5
T_STAR_MAX = 50.0
DEFECT_TOL = 1e-8


def _f_pair(spec):
    return (lambda a, b: discrete_gradient(spec, a, b),
            lambda a, b: discrete_gradient_db(spec, a, b))


def _psi_pair(spec):
    return (lambda a, b: shifted_gradient(spec, a, b),
            lambda a, b: shifted_gradient_db(spec, a, b))


# ---------------------------------------------------------------------------
# Z/K splitting
# ---------------------------------------------------------------------------

def solve_split(
    phi0: HypState,
    T: float,
    dt: float,
    ops: Operators,
    spec: NonlinearitySpec,
    beta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    max_newton: int = DEFAULT_MAX_NEWTON,
    stride: int = 1,
    v_mode: str = "direct",
    with_h: bool = False,
) -> SplitTrajectory:
    """March u, w and v together.

    w solves the ψ-system driven by βu; v is either marched directly with
    source ψ(u) − ψ(w) (``v_mode="direct"``) or defined as u − w
    (``v_mode="difference"``).  ``with_h`` also marches h = w_t through the
    differentiated w-system.
    """
    if v_mode not in ("direct", "difference"):
        raise ValueError(f"unknown v_mode {v_mode!r}")
    sspec = spec if beta is None else spec.with_beta(beta)
    beta = sspec.shift
    eps = phi0.eps
    n_steps, dt = step_count(T, dt)
    scheme = MidpointScheme(ops, eps, dt, tol, max_newton)
    norms = NormSuite(ops)
    m = ops.lumped
    f_grad, f_db = _f_pair(spec)
    psi_grad, psi_db = _psi_pair(sspec)
    dpsi = sspec.psi.deriv()

    u, ut = phi0.u.copy(), phi0.v.copy()
    f0 = np.full_like(u, spec.f0)
    w, wt = np.zeros_like(u), -f0 + beta * u
    v, vt = u.copy(), ut + f0 - beta * u
    # h = w_t, so h_t(0) = w_tt(0) read off the w-equation at t = 0
    h = wt.copy()
    ht = norms.solve_mass(beta * m * u - m * sspec.psi(w) - ops.damping @ wt - ops.robin @ w) / eps

    rows: dict[str, list] = {k: [] for k in ("t", "U", "Ut", "V", "Vt", "W", "Wt", "H", "Ht")}

    def sample(t):
        for key, arr in zip(rows, (t, u, ut, v, vt, w, wt, h, ht)):
            rows[key].append(arr if key == "t" else arr.copy())

    sample(0.0)
    for k in range(1, n_steps + 1):
        t = (k - 1) * dt
        du, _, _ = scheme.advance(u, ut, f_grad, f_db, t=t)
        u_mid = u + 0.5 * du
        dw, _, _ = scheme.advance(w, wt, psi_grad, psi_db, load=-beta * m * u_mid, t=t)
        if with_h:
            w_mid = w + 0.5 * dw
            coeff = dpsi(w_mid)
            dh, _, _ = scheme.advance(
                h, ht,
                lambda a, b: coeff * 0.5 * (a + b),
                lambda a, b: 0.5 * coeff,
                load=-beta * m * (du / dt), t=t,
            )
            h, ht = h + dh, scheme.velocity(ht, dh)
        if v_mode == "direct":
            load = m * (psi_grad(u, u + du) - psi_grad(w, w + dw))
            dv, _, _ = scheme.advance(v, vt, load=load, t=t)
            v, vt = v + dv, scheme.velocity(vt, dv)
        u, ut = u + du, scheme.velocity(ut, du)
        w, wt = w + dw, scheme.velocity(wt, dw)
        if v_mode == "difference":
            v, vt = u - w, ut - wt
        if k % stride == 0 or k == n_steps:
            sample(k * dt)

    arr = {k: np.asarray(val) for k, val in rows.items()}
    defect = np.array([norms.norm_H1(a - b - c) for a, b, c in zip(arr["U"], arr["V"], arr["W"])])
    vel_defect = np.array([
        math.sqrt(max(norms.l2_sq(a - b - c), 0.0)) for a, b, c in zip(arr["Ut"], arr["Vt"], arr["Wt"])
    ])
    z_norm = np.array([math.sqrt(norms.hyp_sq(a, b, eps)) for a, b in zip(arr["V"], arr["Vt"])])
    k_norm = np.array([norms.d_norm(a, b) for a, b in zip(arr["W"], arr["Wt"])])
    if defect.size and defect.max() > DEFECT_TOL:
        _LOGGER.warning("split reconstruction defect %.2e exceeds %.0e", defect.max(), DEFECT_TOL)

    return SplitTrajectory(
        eps=eps, beta=beta, times=arr["t"], U=arr["U"], Ut=arr["Ut"], V=arr["V"], Vt=arr["Vt"],
        W=arr["W"], Wt=arr["Wt"], defect=defect, z_norm=z_norm, k_norm=k_norm, v_mode=v_mode,
        cross_check=vel_defect,
        H=arr["H"] if with_h else None, Ht=arr["Ht"] if with_h else None,
    )


def measure_K_regularity(split: SplitTrajectory) -> float:
    """sup over samples of the discrete ‖(w, w_t)‖_{𝒟_ε}."""
    return float(split.k_norm.max()) if split.k_norm.size else 0.0


def z_decay_fit(split: SplitTrajectory, t_min: float = 1.0) -> tuple[float, float]:
    """(ω̂, R²) of a linear fit to log‖Z_ε(t)φ₀‖² over t >= t_min."""
    t, z = split.times, split.z_norm
    keep = (t >= t_min) & (z > 0.0)
    if keep.sum() < 3:
        return math.nan, math.nan
    y = np.log(z[keep] ** 2)
    slope, intercept = np.polyfit(t[keep], y, 1)
    fit = slope * t[keep] + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return float(-slope), r2


def h_cross_check(split: SplitTrajectory) -> float:
    """max‖h − D_t w‖ / max‖h‖ with D_t the central difference of sampled w."""
    if split.H is None or split.n_samples < 3:
        raise ValueError("split carries no h samples or too few of them")
    t = split.times
    fd = (split.W[2:] - split.W[:-2]) / (t[2:] - t[:-2])[:, None]
    err = np.abs(split.H[1:-1] - fd).max()
    scale = np.abs(split.H).max()
    return float(err / scale) if scale > 0.0 else float(err)


def split_ledger(
    split: SplitTrajectory, params: FunctionalParams, ops: Operators, spec: NonlinearitySpec
) -> EnergyLedger:
    """Per-sample functionals of a split run, with the V_ε ratio and Ψ_ε bound gaps."""
    sspec = spec.with_beta(split.beta) if math.isfinite(spec.theta) else spec
    bounds = SandwichBounds(ops, sspec, params)
    suite = bounds.suite
    norms = suite.norms
    ledger = EnergyLedger()
    for i, t in enumerate(split.times):
        u, ut, v, vt, w, wt = (split.U[i], split.Ut[i], split.V[i], split.Vt[i],
                               split.W[i], split.Wt[i])
        cols = dict(
            z_sq=split.z_norm[i] ** 2,
            k_dnorm=split.k_norm[i],
            V_eps=suite.V_eps(u, w, v, vt, params),
            W_eps=suite.W_eps(w, wt, u, params),
            ut_sq=norms.l2_sq(ut),
            wt_sq=norms.l2_sq(wt),
            split_defect=split.defect[i],
            V_ratio=bounds.v_ratio(u, w, v, vt),
            V_omega=bounds.v_omega,
        )
        if split.H is not None:
            h, ht = split.H[i], split.Ht[i]
            cols["Psi_eps"] = suite.Psi_eps(h, ht, w, params)
            cols["Psi_lower_gap"], cols["Psi_upper_gap"] = bounds.psi_gaps(h, ht, w)
        ledger.record(float(t), **cols)
    return ledger


# ---------------------------------------------------------------------------
# Difference splitting
# ---------------------------------------------------------------------------

def difference_split(
    phi0: HypState,
    theta0: HypState,
    ops: Operators,
    spec: NonlinearitySpec,
    dt: float,
    t_star: Optional[float] = None,
    t_max: float = T_STAR_MAX,
    grid: float = T_STAR_STEP,
    tol: float = DEFAULT_TOL,
    max_newton: int = DEFAULT_MAX_NEWTON,
    lam: Optional[float] = None,
) -> DifferenceSplit:
    """Split φ(t) − θ(t) into the linear part ū and the forced part v̄.

    With ``t_star`` given the run stops there; otherwise t* is searched on
    multiples of ``grid`` up to ``t_max`` as the first time with α̂ < 1/2.
    Not finding one is a reported result, not an error.

    𝒩_ε(ū) is evaluated after every step; the largest increase between
    consecutive steps is kept per sample interval, relative to 𝒩_ε(ū₀).
    ``lam`` defaults to the Poincaré constant of ``ops``.
    """
    if phi0.eps != theta0.eps:
        raise ValueError("both initial states must carry the same eps")
    eps = phi0.eps
    norms = NormSuite(ops)
    m = ops.lumped
    per, dt = step_count(grid, dt)
    horizon = t_star if t_star is not None else t_max
    n_grid = int(round(horizon / grid))
    scheme = MidpointScheme(ops, eps, dt, tol, max_newton)
    f_grad, f_db = _f_pair(spec)
    if lam is None:
        lam, _ = poincare_constant(ops)
    n_params = FunctionalParams.defaults(lam, eps, 0.0, window="N")
    bounds = SandwichBounds(ops, spec, n_params)

    a, at = phi0.u.copy(), phi0.v.copy()
    b, bt = theta0.u.copy(), theta0.v.copy()
    ub, ubt = a - b, at - bt
    vb, vbt = np.zeros_like(a), np.zeros_like(a)
    d0 = math.sqrt(norms.hyp_sq(ub, ubt, eps))
    suite = FunctionalSuite(ops, spec)

    times, UB, UBt, VB, VBt = [0.0], [ub.copy()], [ubt.copy()], [vb.copy()], [vbt.copy()]
    n_prev = suite.N_eps(ub, ubt, n_params)
    n_scale = n_prev if n_prev > 0.0 else 1.0
    n_eps, n_rise, n_gaps = [n_prev], [0.0], [bounds.n_gaps(ub, ubt)]
    alpha_curve = [1.0 if d0 > 0.0 else 0.0]
    lambda_curve = [0.0]
    recon = 0.0
    found: Optional[float] = None

    if d0 == 0.0:
        _LOGGER.info("identical initial states: difference split is identically zero")
        n_grid = 0

    for g in range(1, n_grid + 1):
        rise = 0.0
        for s in range(per):
            t = ((g - 1) * per + s) * dt
            da, _, _ = scheme.advance(a, at, f_grad, f_db, t=t)
            db_, _, _ = scheme.advance(b, bt, f_grad, f_db, t=t)
            dub, _, _ = scheme.advance(ub, ubt, t=t)
            load = m * (f_grad(a, a + da) - f_grad(b, b + db_))
            dvb, _, _ = scheme.advance(vb, vbt, load=load, t=t)
            a, at = a + da, scheme.velocity(at, da)
            b, bt = b + db_, scheme.velocity(bt, db_)
            ub, ubt = ub + dub, scheme.velocity(ubt, dub)
            vb, vbt = vb + dvb, scheme.velocity(vbt, dvb)
            n_now = suite.N_eps(ub, ubt, n_params)
            rise = max(rise, (n_now - n_prev) / n_scale)
            n_prev = n_now
        tg = g * grid
        times.append(tg)
        UB.append(ub.copy())
        UBt.append(ubt.copy())
        VB.append(vb.copy())
        VBt.append(vbt.copy())
        n_eps.append(n_prev)
        n_rise.append(rise)
        n_gaps.append(bounds.n_gaps(ub, ubt))
        alpha = math.sqrt(norms.hyp_sq(ub, ubt, eps)) / d0
        alpha_curve.append(alpha)
        lambda_curve.append(norms.d_norm(vb, vbt) / d0)
        recon = max(recon, norms.norm_H1((a - b) - (ub + vb)))
        if t_star is None and alpha < 0.5:
            found = tg
            break
    if t_star is not None and n_grid > 0:
        found = times[-1]

    alpha_curve = np.asarray(alpha_curve)
    lambda_curve = np.asarray(lambda_curve)
    result = DifferenceSplit(
        eps=eps, times=np.asarray(times), Ubar=np.asarray(UB), Ubar_t=np.asarray(UBt),
        Vbar=np.asarray(VB), Vbar_t=np.asarray(VBt), initial_distance=d0,
        alpha_curve=alpha_curve, lambda_curve=lambda_curve, n_eps=np.asarray(n_eps),
        reconstruction_defect=recon, t_star=found, lam=float(lam),
        n_eps_rise=np.asarray(n_rise), n_gaps=np.asarray(n_gaps),
    )
    if result.n_eps_max_rise > 0.0:
        _LOGGER.debug("N_eps rose by %.3e relative within one step", result.n_eps_max_rise)
    if found is not None:
        result.alpha_hat = float(alpha_curve[-1])
        result.Lambda_hat = float(lambda_curve[-1])
    elif d0 > 0.0:
        _LOGGER.info("no t* <= %g with alpha < 1/2 (min alpha %.3f)", horizon, alpha_curve.min())
    return result


def time_lipschitz(
    phi0: HypState,
    t_star: float,
    dt: float,
    ops: Operators,
    spec: NonlinearitySpec,
    tol: float = DEFAULT_TOL,
    max_samples: int = 200,
) -> float:
    """sup over sample pairs s < t in [t*, 2t*] of ‖φ(t) − φ(s)‖_{ℋ_ε} / (t − s)."""
    if not t_star > 0.0:
        raise ValueError(f"t_star must be positive, got {t_star}")
    n_steps, _ = step_count(2.0 * t_star, dt)
    stride = max(1, n_steps // (2 * max_samples))
    rec = solve_trajectory("hyperbolic", phi0, 2.0 * t_star, dt, ops, spec, tol=tol, stride=stride)
    norms = NormSuite(ops)
    keep = np.flatnonzero(rec.times >= t_star - 1e-12)
    best = 0.0
    for i_pos, i in enumerate(keep):
        for j in keep[i_pos + 1:]:
            d = math.sqrt(norms.hyp_sq(rec.U[j] - rec.U[i], rec.V[j] - rec.V[i], phi0.eps))
            best = max(best, d / (rec.times[j] - rec.times[i]))
    return best


def difference_ledger(diff: DifferenceSplit) -> EnergyLedger:
    """α̂(t), Λ̂(t) and 𝒩_ε(ū) of a difference split as ledger columns."""
    ledger = EnergyLedger()
    for i, t in enumerate(diff.times):
        cols = dict(
            alpha=diff.alpha_curve[i], lambda_ratio=diff.lambda_curve[i],
            N_eps=diff.n_eps[i], initial_distance=diff.initial_distance,
            recon_defect=diff.reconstruction_defect, eps=diff.eps, lam=diff.lam,
        )
        if diff.n_eps_rise is not None:
            cols["N_eps_rise"] = diff.n_eps_rise[i]
        if diff.n_gaps is not None:
            cols["N_lower_gap"], cols["N_upper_gap"] = diff.n_gaps[i]
        ledger.record(float(t), **cols)
    return ledger
