"""Evaluation, discrete gradients and assumption checks for f.

The nonlinear term is always integrated with nodal (lumped) quadrature, so
every operation here acts pointwise on arrays of nodal values.
"""
from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from relaxa.schema.nonlinearity import AssumptionReport, NonlinearityError, NonlinearitySpec

_LOGGER = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def doublewell(k: float = 1.0, beta: Optional[float] = None) -> NonlinearitySpec:
    """f(s) = s³ − 2ks, the derivative of F(s) = ¼s⁴ − ks²."""
    k = float(k)
    return NonlinearitySpec((0.0, -2.0 * k, 0.0, 1.0), kind="doublewell", k=k, beta=beta)


def polynomial(*coefficients: float, beta: Optional[float] = None) -> NonlinearitySpec:
    """f(s) = c₀ + c₁s + c₂s² + c₃s³."""
    return NonlinearitySpec(tuple(coefficients), beta=beta)


def linear(c: float = 0.0, beta: Optional[float] = None) -> NonlinearitySpec:
    """f(s) = c·s."""
    return NonlinearitySpec((0.0, float(c)), beta=beta)


# ---------------------------------------------------------------------------
# Pointwise evaluation
# ---------------------------------------------------------------------------

def eval_f(spec: NonlinearitySpec, s):
    return spec.f(s)


def eval_F(spec: NonlinearitySpec, s):
    return spec.F(s)


def eval_fprime(spec: NonlinearitySpec, s):
    return spec.fprime(s)


def eval_psi(spec: NonlinearitySpec, s):
    return spec.psi(s)


def eval_Psi(spec: NonlinearitySpec, s):
    return spec.Psi(s)


# ---------------------------------------------------------------------------
# Discrete gradients
# ---------------------------------------------------------------------------

def discrete_gradient(spec: NonlinearitySpec, a, b) -> np.ndarray:
    """(F(b) − F(a)) / (b − a), expanded so that no difference is divided.

    Equals f(a) on the diagonal and stays accurate to round-off in f when b
    is within a few ulps of a.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(np.broadcast(a, b).shape)
    for k, C in enumerate(spec.F.coef):
        if k < 1 or C == 0.0:
            continue
        for j in range(k):
            out = out + C * a ** (k - 1 - j) * b ** j
    return out


def discrete_gradient_db(spec: NonlinearitySpec, a, b) -> np.ndarray:
    """∂/∂b of the divided difference of F, exact for the polynomial form.

    With F(s) = Σ C_k s^k the divided difference is
    Σ C_k Σ_{j<k} a^{k−1−j} b^j, whose b-derivative has no singularity.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(np.broadcast(a, b).shape)
    for k, C in enumerate(spec.F.coef):
        if k < 2 or C == 0.0:
            continue
        for j in range(1, k):
            out = out + C * j * a ** (k - 1 - j) * b ** (j - 1)
    return out


def shifted_gradient(spec: NonlinearitySpec, a, b) -> np.ndarray:
    """Discrete gradient of Ψ; ψ = f + βs splits exactly into F- and β-parts."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return discrete_gradient(spec, a, b) + spec.shift * 0.5 * (a + b)


def shifted_gradient_db(spec: NonlinearitySpec, a, b) -> np.ndarray:
    return discrete_gradient_db(spec, a, b) + 0.5 * spec.shift


# ---------------------------------------------------------------------------
# Structural assumptions
# ---------------------------------------------------------------------------

def _sign_liminf(spec: NonlinearitySpec) -> float:
    """liminf_{|s|→∞} f(s)/s in closed form."""
    c = spec.coefficients + (0.0,) * (4 - len(spec.coefficients))
    if c[3] > 0.0:
        return math.inf
    if c[3] < 0.0 or c[2] != 0.0:
        return -math.inf
    return c[1]


def check_assumptions(
    spec: NonlinearitySpec,
    lam: float,
    sample_range: tuple[float, float] = (-10.0, 10.0),
    n_samples: int = 4001,
    measure: float = 1.0,
    mu: Optional[float] = None,
) -> AssumptionReport:
    """Check growth, sign and monotonicity of f on a sample grid.

    Violations are reported as flags; nothing is raised for them.  ``measure``
    is |Ω|, which scales the pointwise constants c₁, c₂ to integrals.
    """
    if not lam > 0.0:
        raise NonlinearityError(f"lambda must be positive, got {lam}")
    lo, hi = float(sample_range[0]), float(sample_range[1])
    if not hi > lo:
        raise NonlinearityError(f"empty sample range [{lo}, {hi}]")
    mu = lam / 2.0 if mu is None else float(mu)
    if not 0.0 < mu <= lam:
        raise NonlinearityError(f"mu must lie in (0, lambda], got {mu}")

    s = np.linspace(lo, hi, n_samples)
    notes: list[str] = []
    fs = spec.f(s)

    growth_ok = bool(np.all(np.abs(spec.fsecond(s)) <= spec.ell * (1.0 + np.abs(s)) + 1e-12))
    if not growth_ok:
        notes.append("growth: |f''(s)| exceeds ell(1+|s|) on the grid")

    theta = spec.theta
    monotone_ok = math.isfinite(theta) and bool(np.all(spec.fprime(s) >= -theta - 1e-12))
    if not monotone_ok:
        notes.append("monotonicity: f' is unbounded below" if not math.isfinite(theta)
                     else "monotonicity: f'(s) < -theta on the grid")

    liminf = _sign_liminf(spec)
    sign_ok = liminf > -lam
    nz = s != 0.0
    abs_s, ratio = np.abs(s[nz]), fs[nz] / s[nz]
    order = np.argsort(abs_s)
    tail_min = np.minimum.accumulate(ratio[order][::-1])[::-1]
    inside = np.flatnonzero(tail_min > -lam)
    if inside.size:
        sign_s0 = float(abs_s[order][inside[0]])
        sign_delta = float(tail_min[inside[0]] + lam)
    else:
        sign_s0, sign_delta = math.nan, math.nan
        notes.append("sign: no s0 inside the sample range")
    if not sign_ok:
        notes.append(f"sign: liminf f(s)/s = {liminf} is not above -lambda = {-lam}")

    gap = lam - mu
    c1 = max(0.0, float(np.max(-fs * s - gap * s * s))) * measure
    c2 = max(0.0, float(np.max(-2.0 * spec.F(s) - gap * s * s))) * measure
    psi_sup = float(np.max(np.abs(spec.fprime(s) + spec.shift)))

    report = AssumptionReport(
        lam=lam, mu=mu, c1=c1, c2=c2, ell=spec.ell, theta=theta,
        growth_ok=growth_ok, sign_ok=sign_ok, monotone_ok=monotone_ok,
        sign_s0=sign_s0, sign_delta=sign_delta, sample_range=(lo, hi),
        n_samples=n_samples, psi_sup=psi_sup, notes=notes,
    )
    if not report.passed:
        _LOGGER.warning("assumptions fail for %s: %s", spec, "; ".join(notes))
    return report
