"""Implicit-midpoint steps with a discrete-gradient nonlinearity.

The unknown of every step is the increment δ = uⁿ⁺¹ − uⁿ.  For ε > 0 the
midpoint velocity is δ/Δt and vⁿ⁺¹ = 2δ/Δt − vⁿ, so the step solves

    R(δ) = 2εMδ/Δt² − 2εMvⁿ/Δt + Dδ/Δt + A(uⁿ + δ/2) + m∘g(uⁿ, uⁿ + δ) + b = 0

with M the interior mass, D = M + M_Γ, A = K + M_Γ, m the lumped mass, g a
discrete gradient and b an optional load.  ε = 0 drops the first two terms.
Testing R with 2δ gives the energy identity

    E(tⁿ⁺¹) − E(tⁿ) + 2Δt‖v^{n+½}‖²_D + 2δᵀb = 2δᵀR(δ),

so the balance defect is controlled by the Newton residual alone.
"""
from __future__ import annotations

import logging
import math
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from relaxa.nonlinearity import discrete_gradient, discrete_gradient_db
from relaxa.schema.mesh import Operators
from relaxa.schema.nonlinearity import NonlinearitySpec
from relaxa.schema.state import HypState, ParState, StepReport

_LOGGER = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_NEWTON = 25
# Newton accepts a residual within this factor of tol once it stops contracting.
STAGNATION_FACTOR = 100.0

Gradient = Callable[[np.ndarray, np.ndarray], np.ndarray]


class StepFailure(RuntimeError):
    """Newton did not reach the tolerance within the iteration budget."""

    def __init__(self, message: str, t: float, dt: float, residual: float, iterations: int):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.residual = residual
        self.iterations = iterations

    def __reduce__(self):
        return type(self), (self.args[0], self.t, self.dt, self.residual, self.iterations)


def dual_norm(ops: Operators, r: np.ndarray) -> float:
    """‖r‖ in the lumped dual norm sqrt(Σ rᵢ²/mᵢ)."""
    return math.sqrt(float(np.sum(r * r / ops.lumped)))


class MidpointScheme:
    """One fixed (ε, Δt) midpoint scheme; matrices are built once per instance."""

    def __init__(
        self,
        ops: Operators,
        eps: float,
        dt: float,
        tol: float = DEFAULT_TOL,
        max_newton: int = DEFAULT_MAX_NEWTON,
    ):
        if not dt > 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        if not tol > 0.0:
            raise ValueError(f"tol must be positive, got {tol}")
        if eps < 0.0:
            raise ValueError(f"eps must be nonnegative, got {eps}")
        self.ops = ops
        self.eps = float(eps)
        self.dt = float(dt)
        self.tol = float(tol)
        self.max_newton = int(max_newton)
        base = ops.damping / dt + 0.5 * ops.robin
        if self.eps > 0.0:
            base = base + (2.0 * self.eps / dt**2) * ops.M_omega
        self.base = base.tocsc()

    @cached_property
    def _lu(self):
        return spla.splu(self.base)

    def _constant_part(self, u, v, load) -> np.ndarray:
        r = self.ops.robin @ u
        if self.eps > 0.0:
            r = r - (2.0 * self.eps / self.dt) * (self.ops.M_omega @ v)
        if load is not None:
            r = r + load
        return r

    def advance(
        self,
        u: np.ndarray,
        v: Optional[np.ndarray],
        gradient: Optional[Gradient] = None,
        gradient_db: Optional[Gradient] = None,
        load: Optional[np.ndarray] = None,
        t: float = 0.0,
    ) -> tuple[np.ndarray, float, int]:
        """Solve R(δ) = 0 and return (δ, residual, newton iterations).

        Without ``gradient`` the step is linear and solved by one LU solve.
        A residual that stops contracting within STAGNATION_FACTOR of the
        tolerance is at the round-off floor of the nodal sums and is accepted
        with a warning.
        """
        m = self.ops.lumped
        const = self._constant_part(u, v, load)

        if gradient is None:
            delta = self._lu.solve(-const)
            r = self.base @ delta + const
            return delta, dual_norm(self.ops, r), 1

        def residual(d):
            return self.base @ d + const + m * gradient(u, u + d)

        delta = self.dt * v if (self.eps > 0.0 and v is not None) else np.zeros_like(u)
        r = residual(delta)
        res = dual_norm(self.ops, r)
        iters = 0
        while res > self.tol:
            if iters >= self.max_newton or not math.isfinite(res):
                raise StepFailure(
                    f"Newton stalled at t={t:g}, dt={self.dt:g}: residual {res:.3e} "
                    f"after {iters} iterations",
                    t=t, dt=self.dt, residual=res, iterations=iters,
                )
            J = self.base + sp.diags(m * gradient_db(u, u + delta))
            delta = delta - spla.spsolve(J.tocsc(), r)
            iters += 1
            prev, r = res, residual(delta)
            res = dual_norm(self.ops, r)
            _LOGGER.debug("t=%g newton %d residual %.3e", t, iters, res)
            if self.tol < res <= STAGNATION_FACTOR * self.tol and res >= 0.5 * prev:
                _LOGGER.warning(
                    "t=%g dt=%g: Newton stagnated at residual %.3e (tol %.1e) after %d iterations, accepting",
                    t, self.dt, res, self.tol, iters,
                )
                break
        return delta, res, iters

    def velocity(self, v: Optional[np.ndarray], delta: np.ndarray) -> np.ndarray:
        if self.eps > 0.0:
            return 2.0 * delta / self.dt - v
        return delta / self.dt

    def dissipation(self, delta: np.ndarray) -> float:
        """Δt‖δ/Δt‖²_D, the (undoubled) damping work over the step."""
        return float(delta @ (self.ops.damping @ delta)) / self.dt


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------

def hyperbolic_energy(ops: Operators, spec: NonlinearitySpec, u, v, eps: float) -> float:
    """E = ‖(u, v)‖²_{ℋ_ε} + 2∫F(u), F integrated with the lumped mass."""
    return (
        eps * float(v @ (ops.M_omega @ v))
        + float(u @ (ops.robin @ u))
        + 2.0 * float(ops.lumped @ spec.F(u))
    )


def lyapunov(ops: Operators, spec: NonlinearitySpec, u) -> float:
    """½‖u‖₁² + ∫F(u)."""
    return 0.5 * float(u @ (ops.robin @ u)) + float(ops.lumped @ spec.F(u))


def _f_gradients(spec: NonlinearitySpec) -> tuple[Gradient, Gradient]:
    return (lambda a, b: discrete_gradient(spec, a, b),
            lambda a, b: discrete_gradient_db(spec, a, b))


# ---------------------------------------------------------------------------
# Public steps
# ---------------------------------------------------------------------------

def step_hyperbolic(
    state: HypState,
    dt: float,
    ops: Operators,
    spec: NonlinearitySpec,
    tol: float = DEFAULT_TOL,
    max_newton: int = DEFAULT_MAX_NEWTON,
    scheme: Optional[MidpointScheme] = None,
) -> tuple[HypState, StepReport]:
    scheme = scheme or MidpointScheme(ops, state.eps, dt, tol, max_newton)
    grad, grad_db = _f_gradients(spec)
    e0 = hyperbolic_energy(ops, spec, state.u, state.v, state.eps)
    delta, res, iters = scheme.advance(state.u, state.v, grad, grad_db, t=state.t)
    u1 = state.u + delta
    v1 = scheme.velocity(state.v, delta)
    e1 = hyperbolic_energy(ops, spec, u1, v1, state.eps)
    diss = 2.0 * scheme.dissipation(delta)
    report = StepReport(
        t=state.t + dt, dt=dt, energy=e1, diss_increment=diss,
        residual=res, newton_iters=iters, defect=abs(e1 - e0 + diss),
    )
    return HypState(u1, v1, state.t + dt, state.eps), report


def step_parabolic(
    state: ParState,
    dt: float,
    ops: Operators,
    spec: NonlinearitySpec,
    tol: float = DEFAULT_TOL,
    max_newton: int = DEFAULT_MAX_NEWTON,
    scheme: Optional[MidpointScheme] = None,
) -> tuple[ParState, StepReport]:
    scheme = scheme or MidpointScheme(ops, 0.0, dt, tol, max_newton)
    grad, grad_db = _f_gradients(spec)
    l0 = lyapunov(ops, spec, state.u)
    delta, res, iters = scheme.advance(state.u, None, grad, grad_db, t=state.t)
    u1 = state.u + delta
    l1 = lyapunov(ops, spec, u1)
    diss = scheme.dissipation(delta)
    report = StepReport(
        t=state.t + dt, dt=dt, energy=l1, diss_increment=diss,
        residual=res, newton_iters=iters, defect=abs(l1 - l0 + diss),
    )
    return ParState(u1, state.t + dt), report


def parabolic_velocity(ops: Operators, spec: NonlinearitySpec, u: np.ndarray) -> np.ndarray:
    """u_t of the semi-discrete parabolic system, D⁻¹(−A u − m∘f(u))."""
    rhs = -(ops.robin @ u) - ops.lumped * spec.f(u)
    return spla.spsolve(ops.damping.tocsc(), rhs)
