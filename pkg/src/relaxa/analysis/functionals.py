"""Lyapunov functionals of the relaxation problem and the Poincaré constant λ.

Linear terms use the consistent matrices; every term carrying f, F, ψ or Ψ
uses nodal quadrature with the lumped mass m, exactly as the steppers do.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from relaxa.fem.norms import NormSuite
from relaxa.schema.mesh import Operators
from relaxa.schema.nonlinearity import AssumptionReport, NonlinearitySpec
from relaxa.schema.params import FunctionalParams
from relaxa.schema.state import HypState

_LOGGER = logging.getLogger(__name__)

DENSE_CERTIFY_LIMIT = 200
DENSE_FALLBACK_LIMIT = 3000


class EigenError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Poincaré constant
# ---------------------------------------------------------------------------

def _dense_lowest(A: sp.spmatrix, B: sp.spmatrix) -> tuple[float, np.ndarray]:
    vals, vecs = sla.eigh(A.toarray(), B.toarray(), subset_by_index=[0, 0])
    return float(vals[0]), vecs[:, 0]


def _normalize(x: np.ndarray, B: sp.spmatrix) -> np.ndarray:
    x = x / math.sqrt(float(x @ (B @ x)))
    return x if x.sum() >= 0.0 else -x


def poincare_constant(
    ops: Operators,
    mass: str = "consistent",
    shift: float = 0.0,
    tol: float = 1e-13,
    max_iter: int = 500,
    certify: bool = True,
) -> tuple[float, np.ndarray]:
    """Smallest λ with (K + M_gamma)x = λBx by shifted inverse iteration.

    ``mass="consistent"`` takes B = M_omega; ``mass="lumped"`` takes
    B = diag(m), the constant that controls lumped-quadrature terms.
    With ``certify`` the iterated value on meshes with at most 200 nodes is
    checked against a dense generalized eigensolve and EigenError is raised
    when the two disagree.
    """
    A = ops.robin
    if mass == "consistent":
        B = ops.M_omega
    elif mass == "lumped":
        B = sp.diags(ops.lumped).tocsr()
    else:
        raise ValueError(f"unknown mass {mass!r}")
    n = ops.n_nodes

    lu = spla.splu((A - shift * B).tocsc())
    x = _normalize(np.ones(n) + 0.01 * np.linspace(0.0, 1.0, n), B)
    lam = float(x @ (A @ x))
    converged = False
    for it in range(1, max_iter + 1):
        y = _normalize(lu.solve(B @ x), B)
        lam_new = float(y @ (A @ y))
        r = A @ y - lam_new * (B @ y)
        step = abs(lam_new - lam) / abs(lam_new)
        x, lam = y, lam_new
        if step < tol and float(np.linalg.norm(r)) <= 1e-9 * lam * float(np.linalg.norm(B @ y)):
            converged = True
            break
    if not converged:
        if n <= DENSE_FALLBACK_LIMIT:
            _LOGGER.warning("inverse iteration stagnated after %d steps; dense fallback", max_iter)
            lam, x = _dense_lowest(A, B)
            return lam, _normalize(x, B)
        raise EigenError(f"inverse iteration did not converge in {max_iter} steps (n={n})")
    _LOGGER.debug("lambda=%.15g after %d inverse iterations", lam, it)

    if certify and n <= DENSE_CERTIFY_LIMIT:
        dense, _ = _dense_lowest(A, B)
        if abs(dense - lam) > 1e-8 * abs(dense):
            raise EigenError(f"inverse iteration lambda={lam!r} disagrees with dense {dense!r} (n={n})")
    return lam, x


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

class FunctionalSuite:
    """E_ε, V_ε, Ψ_ε, W_ε and 𝒩_ε on one mesh for one nonlinearity."""

    def __init__(self, ops: Operators, spec: NonlinearitySpec):
        self.ops = ops
        self.spec = spec
        self.norms = NormSuite(ops)
        self.m = ops.lumped

    def _lumped(self, g: np.ndarray) -> float:
        return float(self.m @ g)

    def E_eps(self, u, v, p: FunctionalParams) -> float:
        """‖(u, v)‖²_{ℋ_ε} + αε⟨v, u⟩ + 2∫F(u)."""
        n = self.norms
        return (
            n.hyp_sq(u, v, p.eps)
            + p.alpha * p.eps * n.inner(v, u)
            + 2.0 * self._lumped(self.spec.F(u))
        )

    def V_eps(self, u, w, vf, vt, p: FunctionalParams) -> float:
        """ε‖v_t‖² + αε⟨v_t, v⟩ + ‖v‖₁² + 2⟨ψ(u) − ψ(w), v⟩ − ⟨ψ'(u)v, v⟩."""
        n, psi = self.norms, self.spec.psi
        dpsi = psi.deriv()
        return (
            p.eps * n.l2_sq(vt)
            + p.alpha * p.eps * n.inner(vt, vf)
            + n.h1_sq(vf)
            + 2.0 * self._lumped((psi(u) - psi(w)) * vf)
            - self._lumped(dpsi(u) * vf * vf)
        )

    def Psi_eps(self, h, ht, w, p: FunctionalParams) -> float:
        """ε‖h_t‖² + αε⟨h_t, h⟩ + ‖h‖₁² + ⟨ψ'(w)h, h⟩."""
        n = self.norms
        dpsi = self.spec.psi.deriv()
        return (
            p.eps * n.l2_sq(ht)
            + p.alpha * p.eps * n.inner(ht, h)
            + n.h1_sq(h)
            + self._lumped(dpsi(w) * h * h)
        )

    def W_eps(self, w, wt, u, p: FunctionalParams) -> float:
        """‖(w, w_t)‖²_{ℋ_ε} + 2∫Ψ(w) − 2β⟨u, w⟩, the coupling in nodal quadrature."""
        return (
            self.norms.hyp_sq(w, wt, p.eps)
            + 2.0 * self._lumped(self.spec.Psi(w))
            - 2.0 * p.beta * self._lumped(np.asarray(u) * np.asarray(w))
        )

    def N_eps(self, ub, ubt, p: FunctionalParams) -> float:
        """ε‖ū_t‖² + ε⟨ū_t, ū⟩ + ‖∇ū‖² + ‖ū‖²_{L²(Γ)}."""
        n = self.norms
        return p.eps * n.l2_sq(ubt) + p.eps * n.inner(ubt, ub) + n.grad_sq(ub) + n.boundary_sq(ub)


def E_eps(phi: HypState, params: FunctionalParams, ops: Operators, spec: NonlinearitySpec) -> float:
    return FunctionalSuite(ops, spec).E_eps(phi.u, phi.v, params)


# ---------------------------------------------------------------------------
# Rates and parameter defaults
# ---------------------------------------------------------------------------

def rates(p: FunctionalParams, Q: float = 0.0) -> dict[str, Optional[float]]:
    """Decay and equivalence rates ω₀…ω₆ from their closed forms; ω₇ is fitted."""
    a, eta, lam, mu = p.alpha, p.eta, p.lam, p.mu
    out: dict[str, Optional[float]] = {
        "omega0": min(2.0 - a, a * (mu / lam - 1.0 / (4.0 * eta))),
        "omega1": min(1.0 - a / 2.0, 1.0 - a / (2.0 * lam) - (lam - mu) / lam),
        "omega2": min(1.0 - a / 2.0, 0.5 - a / (2.0 * lam)),
        "omega3": min(2.0 - a, 1.0, a / 2.0),
        "omega4": min(1.0 - a / 2.0, 1.0 - a / (2.0 * lam) - a * Q),
        "omega5": max(1.0 + a / 2.0, 1.0 + a / (2.0 * lam) + a * Q),
        "omega6": 1.0 - 1.0 / (4.0 * eta) if 0.25 < eta < 2.0 else None,
        "omega7": None,
    }
    return out


def default_beta(spec: NonlinearitySpec, u_sup: float) -> float:
    """β = (C(R) + 2ϑ)/2 with C(R) = ℓ(1 + sup|u|), never below ϑ."""
    theta = spec.theta if math.isfinite(spec.theta) else 0.0
    c_r = spec.ell * (1.0 + abs(u_sup))
    return max(theta, 0.5 * (c_r + 2.0 * theta))


# ---------------------------------------------------------------------------
# Sandwich inequalities
# ---------------------------------------------------------------------------

GAP_TOL = 1e-10


def relative_gap(lhs: float, rhs: float) -> float:
    """(rhs − lhs)/(1 + |lhs| + |rhs|) for a bound lhs <= rhs; negative when broken."""
    return (rhs - lhs) / (1.0 + abs(lhs) + abs(rhs))


class SandwichBounds:
    """Two-sided bounds of E_ε, Ψ_ε and 𝒩_ε, and the V_ε equivalence ratio.

    Every constant follows from Cauchy–Schwarz in the discrete inner products
    and ‖u‖² <= ‖u‖₁²/λ, so the bounds hold on the discrete states up to
    round-off.  Terms in f, F and ψ' stay nodal:

        E_ε + c₂ >= ω₁'‖φ‖²                    ω₁' = min(1 − α/2, 1 − αε/2λ − (λ − μ)/λ_m)
        E_ε <= e₊‖φ‖² + 2∫F⁺(u)                e₊ = max(1 + α/2, 1 + αε/2λ)
        Ψ_ε >= ψ₋‖(h, h_t)‖² + ⟨ψ'(w)⁻h, h⟩    ψ₋ = min(1 − α/2, 1 − αε/2λ)
        Ψ_ε <= e₊‖(h, h_t)‖² + ⟨ψ'(w)⁺h, h⟩
        n₋‖φ‖² <= 𝒩_ε <= n₊‖φ‖²               n₋ = min(½, 1 − ε/2λ), n₊ = max(3/2, 1 + ε/2λ)

    with λ_m the lumped Poincaré constant.
    """

    def __init__(
        self,
        ops: Operators,
        spec: NonlinearitySpec,
        params: FunctionalParams,
        c2: float = 0.0,
        lam_lumped: Optional[float] = None,
    ):
        self.suite = FunctionalSuite(ops, spec)
        self.params = params
        self.c2 = float(c2)
        self._lam_lumped = lam_lumped
        p = params
        tilt = p.alpha * p.eps / (2.0 * p.lam)
        self.e_hi = max(1.0 + p.alpha / 2.0, 1.0 + tilt)
        self.psi_lo = min(1.0 - p.alpha / 2.0, 1.0 - tilt)
        self.n_lo = min(0.5, 1.0 - p.eps / (2.0 * p.lam))
        self.n_hi = max(1.5, 1.0 + p.eps / (2.0 * p.lam))
        self.v_omega = rates(p)["omega2"]

    @cached_property
    def lam_lumped(self) -> float:
        if self._lam_lumped is None:
            self._lam_lumped, _ = poincare_constant(self.suite.ops, mass="lumped")
        return self._lam_lumped

    @cached_property
    def e_lo(self) -> float:
        p = self.params
        return min(1.0 - p.alpha / 2.0,
                   1.0 - p.alpha * p.eps / (2.0 * p.lam) - (p.lam - p.mu) / self.lam_lumped)

    def e_gaps(self, u, v) -> tuple[float, float]:
        s, p = self.suite, self.params
        E = s.E_eps(u, v, p)
        phi_sq = s.norms.hyp_sq(u, v, p.eps)
        F_plus = 2.0 * s._lumped(np.maximum(s.spec.F(u), 0.0))
        return (relative_gap(self.e_lo * phi_sq, E + self.c2),
                relative_gap(E, self.e_hi * phi_sq + F_plus))

    def psi_gaps(self, h, ht, w) -> tuple[float, float]:
        s, p = self.suite, self.params
        Psi = s.Psi_eps(h, ht, w, p)
        norm_sq = s.norms.hyp_sq(h, ht, p.eps)
        nodal = s.spec.psi.deriv()(w) * np.asarray(h) ** 2
        below = s._lumped(np.minimum(nodal, 0.0))
        above = s._lumped(np.maximum(nodal, 0.0))
        return (relative_gap(self.psi_lo * norm_sq + below, Psi),
                relative_gap(Psi, self.e_hi * norm_sq + above))

    def n_gaps(self, ub, ubt) -> tuple[float, float]:
        s, p = self.suite, self.params
        N = s.N_eps(ub, ubt, p)
        phi_sq = s.norms.hyp_sq(ub, ubt, p.eps)
        return relative_gap(self.n_lo * phi_sq, N), relative_gap(N, self.n_hi * phi_sq)

    def v_ratio(self, u, w, vf, vt) -> float:
        """V_ε/‖(v, v_t)‖²_{ℋ_ε}, NaN at v = v_t = 0."""
        s, p = self.suite, self.params
        norm_sq = s.norms.hyp_sq(vf, vt, p.eps)
        if norm_sq <= 1e-300:
            return math.nan
        return s.V_eps(u, w, vf, vt, p) / norm_sq


@dataclass
class SandwichCheck:
    name: str
    min_ratio: float
    max_ratio: float
    lower: float
    upper: float
    ok: bool


def _ratios(values: np.ndarray, scale: np.ndarray) -> tuple[float, float]:
    mask = scale > 1e-300
    if not np.any(mask):
        return math.nan, math.nan
    r = values[mask] / scale[mask]
    return float(r.min()), float(r.max())


def sandwich_report(
    ops: Operators,
    spec: NonlinearitySpec,
    params: FunctionalParams,
    report: AssumptionReport,
    U: np.ndarray,
    V: np.ndarray,
    lam_lumped: Optional[float] = None,
) -> list[SandwichCheck]:
    """Check the two-sided bounds of E_ε and 𝒩_ε on sampled states (U[i], V[i])."""
    bounds = SandwichBounds(ops, spec, params, report.c2, lam_lumped)
    suite, p = bounds.suite, params
    phi_sq = np.array([suite.norms.hyp_sq(u, v, p.eps) for u, v in zip(U, V)])
    E = np.array([suite.E_eps(u, v, p) for u, v in zip(U, V)])
    N = np.array([suite.N_eps(u, v, p) for u, v in zip(U, V)])
    gaps = np.array([bounds.e_gaps(u, v) + bounds.n_gaps(u, v) for u, v in zip(U, V)]).reshape(-1, 4)
    ok = gaps >= -GAP_TOL
    checks = []
    lo, hi = _ratios(E + report.c2, phi_sq)
    checks.append(SandwichCheck("E_eps_lower", lo, hi, bounds.e_lo, math.inf, bool(np.all(ok[:, 0]))))
    lo, hi = _ratios(E, phi_sq)
    checks.append(SandwichCheck("E_eps_upper", lo, hi, -math.inf, bounds.e_hi, bool(np.all(ok[:, 1]))))
    lo, hi = _ratios(N, phi_sq)
    checks.append(SandwichCheck("N_eps_equivalence", lo, hi, bounds.n_lo, bounds.n_hi,
                                bool(np.all(ok[:, 2:])) and bounds.n_lo > 0.0))

    for c in checks:
        if not c.ok:
            _LOGGER.warning("sandwich %s fails: ratios [%g, %g] vs [%g, %g]",
                            c.name, c.min_ratio, c.max_ratio, c.lower, c.upper)
    return checks


def equivalence_constants(values: np.ndarray, norms_sq: np.ndarray) -> tuple[float, float]:
    """Measured C₁, C₂ with C₁‖·‖² <= value <= C₂‖·‖² over the samples."""
    return _ratios(np.asarray(values, dtype=float), np.asarray(norms_sq, dtype=float))


# ---------------------------------------------------------------------------
# Ledger observers
# ---------------------------------------------------------------------------

def energy_observer(
    ops: Operators,
    spec: NonlinearitySpec,
    params: FunctionalParams,
    bounds: Optional[SandwichBounds] = None,
):
    """Observer adding E_eps to hyperbolic ledgers, and its bound gaps when ``bounds`` is given."""
    suite = FunctionalSuite(ops, spec)

    def observe(t, u, ut):
        out = {"E_eps": suite.E_eps(u, ut, params)}
        if bounds is not None:
            out["E_lower_gap"], out["E_upper_gap"] = bounds.e_gaps(u, ut)
        return out

    return observe
