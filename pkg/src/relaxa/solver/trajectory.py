"""Trajectories, initial data and two-trajectory experiments."""
from __future__ import annotations

import logging
import math
from typing import Callable, Iterable, Optional, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from relaxa.fem.norms import NormSuite
from relaxa.schema.ledger import EnergyLedger
from relaxa.schema.mesh import Mesh, Operators
from relaxa.schema.nonlinearity import NonlinearitySpec
from relaxa.schema.reports import DependenceResult
from relaxa.schema.state import HypState, ParState, StepReport, TrajectoryRecord
from relaxa.solver.stepper import (
    DEFAULT_MAX_NEWTON,
    DEFAULT_TOL,
    MidpointScheme,
    StepFailure,
    hyperbolic_energy,
    lyapunov,
    parabolic_velocity,
    step_hyperbolic,
    step_parabolic,
)

_LOGGER = logging.getLogger(__name__)

MAX_HALVINGS = 5

# observer(t, u, u_t) -> extra ledger columns for that sample
Observer = Callable[[float, np.ndarray, np.ndarray], dict]


def default_dt(mesh: Mesh, problem: str) -> float:
    return mesh.h_max / 4.0 if problem == "hyperbolic" else 1e-2


def step_count(T: float, dt: float) -> tuple[int, float]:
    """Number of steps covering [0, T] and the step that lands exactly on T."""
    if T < 0.0:
        raise ValueError(f"T must be nonnegative, got {T}")
    if T == 0.0:
        return 0, dt
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return n, T / n


class _Marcher:
    """Advances one trajectory, halving Δt on Newton failure."""

    def __init__(self, ops, spec, eps, problem, tol, max_newton):
        self.ops, self.spec, self.eps = ops, spec, eps
        self.problem = problem
        self.tol, self.max_newton = tol, max_newton
        self._schemes: dict[float, MidpointScheme] = {}

    def scheme(self, dt: float) -> MidpointScheme:
        if dt not in self._schemes:
            eps = self.eps if self.problem == "hyperbolic" else 0.0
            self._schemes[dt] = MidpointScheme(self.ops, eps, dt, self.tol, self.max_newton)
        return self._schemes[dt]

    def _one(self, state, dt):
        if self.problem == "hyperbolic":
            return step_hyperbolic(state, dt, self.ops, self.spec, scheme=self.scheme(dt))
        return step_parabolic(state, dt, self.ops, self.spec, scheme=self.scheme(dt))

    def advance(self, state, dt: float, reports: list[StepReport], level: int = 0):
        try:
            new, report = self._one(state, dt)
        except StepFailure as exc:
            if level >= MAX_HALVINGS:
                raise
            _LOGGER.warning("%s; retrying with dt=%g", exc, dt / 2.0)
            half = self.advance(state, dt / 2.0, reports, level + 1)
            return self.advance(half, dt / 2.0, reports, level + 1)
        reports.append(report)
        return new


def solve_trajectory(
    problem: str,
    init: Union[HypState, ParState],
    T: float,
    dt: float,
    ops: Operators,
    spec: NonlinearitySpec,
    tol: float = DEFAULT_TOL,
    max_newton: int = DEFAULT_MAX_NEWTON,
    observers: Iterable[Observer] = (),
    stride: int = 1,
) -> TrajectoryRecord:
    """March ``init`` to time ``T`` and sample every ``stride`` steps.

    Parabolic initial data with ``gamma0`` start from the nodal vector whose
    boundary values are γ₀ and interior values u₀.
    """
    if problem not in ("hyperbolic", "parabolic"):
        raise ValueError(f"unknown problem {problem!r}")
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    norms = NormSuite(ops)
    bnodes = ops.mesh.boundary_nodes
    observers = list(observers)
    n_steps, dt = step_count(T, dt)

    if problem == "hyperbolic":
        if not isinstance(init, HypState):
            raise TypeError("hyperbolic trajectories start from a HypState")
        eps = init.eps
        state = init.copy()
        initial_energy = hyperbolic_energy(ops, spec, state.u, state.v, eps)
    else:
        if not isinstance(init, ParState):
            raise TypeError("parabolic trajectories start from a ParState")
        eps = 0.0
        u0 = init.u.copy()
        if init.gamma0 is not None:
            u0[bnodes] = init.gamma0
        state = ParState(u0, init.t)
        initial_energy = lyapunov(ops, spec, u0)

    marcher = _Marcher(ops, spec, eps, problem, tol, max_newton)
    ledger = EnergyLedger()
    reports: list[StepReport] = []
    times, U, V = [], [], []
    dissipated = 0.0

    def sample(st, ut, gamma=None):
        step_max = max((abs(r.defect) for r in reports), default=0.0)
        if problem == "hyperbolic":
            phi_sq = norms.hyp_sq(st.u, ut, eps)
            energy = hyperbolic_energy(ops, spec, st.u, ut, eps)
        else:
            phi_sq = norms.y_sq(st.u, gamma)
            energy = lyapunov(ops, spec, st.u)
        extra = {}
        for obs in observers:
            extra.update(obs(st.t, st.u, ut))
        ledger.record(
            st.t, phi_sq=phi_sq, energy=energy, ut_sq=norms.l2_sq(ut),
            ut_gamma_sq=norms.boundary_sq(ut), dissipation=dissipated,
            eps=eps, steps=float(len(reports)), step_defect_max=step_max, **extra,
        )
        times.append(st.t)
        U.append(st.u.copy())
        V.append(ut.copy())

    def velocity(st):
        return st.v if problem == "hyperbolic" else parabolic_velocity(ops, spec, st.u)

    sample(state, velocity(state), init.gamma0 if problem == "parabolic" else None)
    for k in range(1, n_steps + 1):
        before = len(reports)
        state = marcher.advance(state, dt, reports)
        state.t = k * dt
        for r in reports[before:]:
            dissipated += r.diss_increment / (2.0 if problem == "hyperbolic" else 1.0)
        if k % stride == 0 or k == n_steps:
            sample(state, velocity(state))

    record = TrajectoryRecord(
        problem=problem, eps=eps, times=np.asarray(times), U=np.asarray(U), V=np.asarray(V),
        ledger=ledger, steps=reports, gamma0=init.gamma0 if problem == "parabolic" else None,
        initial_energy=initial_energy,
    )
    _LOGGER.info(
        "%s eps=%g: %d steps to T=%g, balance defect %.2e",
        problem, eps, len(reports), T, record.energy_balance_defect(),
    )
    return record


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

def smooth_field(mesh: Mesh, rng: np.random.Generator, n_modes: int = 4) -> np.ndarray:
    """Random combination of low cosine modes on the mesh nodes."""
    x = mesh.coords
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    xi = (x - lo) / span
    u = np.zeros(mesh.n_nodes)
    for _ in range(n_modes):
        freq = rng.integers(0, 4, size=mesh.dim)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=mesh.dim)
        u += rng.normal() * np.prod(np.cos(np.pi * freq * xi + phase), axis=1)
    return u


def bump_field(mesh: Mesh, amplitude: float) -> np.ndarray:
    """amplitude · Π sin(πξ) in normalized coordinates; vanishes on Γ."""
    x = mesh.coords
    lo = x.min(axis=0)
    xi = (x - lo) / (x.max(axis=0) - lo)
    return amplitude * np.prod(np.sin(np.pi * xi), axis=1)


def well_prepared_velocity(ops: Operators, spec: NonlinearitySpec, u0: np.ndarray) -> np.ndarray:
    """u₁ = Δ_h u₀ − f(u₀), the velocity slaved to u₀ by the parabolic flow."""
    return parabolic_velocity(ops, spec, u0)


def random_state(
    ops: Operators,
    spec: NonlinearitySpec,
    eps: float,
    norm: float,
    rng: np.random.Generator,
    well_prepared: bool = False,
) -> HypState:
    """Smooth random (u₀, u₁) with ‖(u₀, u₁)‖_{ℋ_ε} = ``norm``.

    With ``well_prepared`` the scaling is applied to u₀ (‖u₀‖₁ = norm) and the
    velocity is then slaved to it.
    """
    norms = NormSuite(ops)
    u = smooth_field(ops.mesh, rng)
    if well_prepared:
        h1 = norms.norm_H1(u)
        u = u * (norm / h1) if h1 > 0.0 else u
        return HypState(u, well_prepared_velocity(ops, spec, u), 0.0, eps)
    v = smooth_field(ops.mesh, rng)
    size = math.sqrt(norms.hyp_sq(u, v, eps))
    if size > 0.0:
        u, v = u * (norm / size), v * (norm / size)
    return HypState(u, v, 0.0, eps)


def initial_state(
    kind: str,
    value: float,
    ops: Operators,
    spec: NonlinearitySpec,
    eps: float,
    rng: Optional[np.random.Generator] = None,
    well_prepared: bool = False,
) -> Union[HypState, ParState]:
    """Initial data named by ``kind`` (random | zero | constant | bump).

    ``value`` is the norm for random data, the constant, or the bump
    amplitude.  ``eps == 0`` yields a ParState.
    """
    n = ops.n_nodes
    if kind == "random":
        if rng is None:
            raise ValueError("random initial data needs a generator")
        if eps == 0.0:
            return ParState(random_state(ops, spec, 1.0, value, rng, well_prepared=True).u)
        return random_state(ops, spec, eps, value, rng, well_prepared=well_prepared)
    if kind == "zero":
        u = np.zeros(n)
    elif kind == "constant":
        u = np.full(n, float(value))
    elif kind == "bump":
        u = bump_field(ops.mesh, value)
    else:
        raise ValueError(f"unknown initial data {kind!r}")
    if eps == 0.0:
        return ParState(u)
    v = well_prepared_velocity(ops, spec, u) if well_prepared else np.zeros(n)
    return HypState(u, v, 0.0, eps)


def seed_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent, reproducible generators for ``count`` workers."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _fprime_sup(spec: NonlinearitySpec, lo: float, hi: float) -> float:
    s = np.linspace(lo, hi, 513)
    return float(np.max(np.abs(spec.fprime(s))))


def continuous_dependence_experiment(
    init_a: HypState,
    init_b: HypState,
    T: float,
    dt: float,
    ops: Operators,
    spec: NonlinearitySpec,
    lam: float,
    tol: float = DEFAULT_TOL,
) -> DependenceResult:
    """Growth rate of ‖φ_a − φ_b‖²_{ℋ_ε} against the Lipschitz estimate (sup|f'|)²/λ."""
    if init_a.eps != init_b.eps:
        raise ValueError("both initial states must carry the same eps")
    eps = init_a.eps
    norms = NormSuite(ops)
    ra = solve_trajectory("hyperbolic", init_a, T, dt, ops, spec, tol=tol)
    rb = solve_trajectory("hyperbolic", init_b, T, dt, ops, spec, tol=tol)
    dU, dV = ra.U - rb.U, ra.V - rb.V
    diff_sq = np.array([norms.hyp_sq(du, dv, eps) for du, dv in zip(dU, dV)])
    gamma_rate = np.array([norms.boundary_sq(dv) for dv in dV])
    if ra.n_samples > 1:
        boundary = cumulative_trapezoid(gamma_rate, ra.times, initial=0.0)
    else:
        boundary = np.zeros(1)

    lo = float(min(ra.U.min(), rb.U.min()))
    hi = float(max(ra.U.max(), rb.U.max()))
    bound = _fprime_sup(spec, lo, hi) ** 2 / lam

    d0 = diff_sq[0]
    if d0 == 0.0:
        return DependenceResult(ra.times, diff_sq, boundary, None, bound,
                                "identical initial data: growth rate undefined")
    t, d = ra.times[1:], diff_sq[1:]
    keep = d > 0.0
    if not np.any(keep):
        nu = -math.inf
    else:
        nu = float(np.max(np.log(d[keep] / d0) / t[keep]))
    return DependenceResult(ra.times, diff_sq, boundary, nu, bound)


def convergence_order(coarse: np.ndarray, mid: np.ndarray, fine: np.ndarray) -> float:
    """Observed order log₂(|coarse − mid| / |mid − fine|) of a dt-halving triple."""
    a = float(np.linalg.norm(np.asarray(coarse) - np.asarray(mid)))
    b = float(np.linalg.norm(np.asarray(mid) - np.asarray(fine)))
    if b == 0.0:
        return math.inf if a > 0.0 else math.nan
    return math.log2(a / b)
