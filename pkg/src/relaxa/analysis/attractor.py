"""Absorbing sets, ω-limit clouds and the upper-semicontinuity sweep.

Clouds of the hyperbolic (ε > 0) and parabolic (ε = 0) problems are compared
in the common extended phase space 𝒳₁ = H¹ × L²(Γ) × L² × L²(Γ).  Parabolic
states enter it through the lift, which adds the velocity slaved to u.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.spatial.distance import cdist

from relaxa.analysis.verify import MIN_SAMPLES, TAIL_FRACTION, fit_envelope
from relaxa.fem.norms import NormSuite
from relaxa.schema.mesh import Operators
from relaxa.schema.nonlinearity import NonlinearitySpec
from relaxa.schema.reports import AbsorbingReport, SweepResult, SweepRow
from relaxa.schema.state import Cloud, ExtState, HypState, ParState
from relaxa.solver.stepper import DEFAULT_TOL, parabolic_velocity
from relaxa.solver.trajectory import default_dt, random_state, seed_rngs, solve_trajectory

_LOGGER = logging.getLogger(__name__)

DEFAULT_LEVELS = (1.0, 5.0, 10.0)
MONOTONE_TOLERANCE = 0.2


# ---------------------------------------------------------------------------
# Seeded runs
# ---------------------------------------------------------------------------

def _problem(eps: float) -> str:
    return "hyperbolic" if eps > 0.0 else "parabolic"


def _initial(ops, spec, eps, level, rng, well_prepared):
    if eps > 0.0:
        return random_state(ops, spec, eps, level, rng, well_prepared=well_prepared)
    return ParState(random_state(ops, spec, 1.0, level, rng, well_prepared=True).u)


def _seed_run(job):
    ops, spec, eps, level, rng, well_prepared, T, dt, stride, tol = job
    init = _initial(ops, spec, eps, level, rng, well_prepared)
    return solve_trajectory(_problem(eps), init, T, dt, ops, spec, tol=tol, stride=stride)


def _run_all(jobs: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_seed_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_seed_run, jobs))


def _seed_jobs(ops, spec, eps, n_seeds, levels, seed, well_prepared, T, dt, stride, tol):
    rngs = seed_rngs(seed, n_seeds)
    return [
        (ops, spec, eps, float(levels[i % len(levels)]), rngs[i], well_prepared, T, dt, stride, tol)
        for i in range(n_seeds)
    ]


# ---------------------------------------------------------------------------
# Absorbing radius
# ---------------------------------------------------------------------------

def _entry_time(times: np.ndarray, curve: np.ndarray, threshold: float) -> float:
    """First sample time after which ``curve`` stays at or below ``threshold``."""
    above = np.flatnonzero(curve > threshold)
    if above.size == 0:
        return float(times[0])
    if above[-1] == curve.size - 1:
        return math.inf
    return float(times[above[-1] + 1])


def absorbing_radius(
    ops: Operators,
    spec: NonlinearitySpec,
    eps: float,
    n_seeds: int = 20,
    T: float = 20.0,
    dt: Optional[float] = None,
    levels: Sequence[float] = DEFAULT_LEVELS,
    seed: int = 0,
    stride: int = 1,
    tol: float = DEFAULT_TOL,
    jobs: int = 1,
) -> AbsorbingReport:
    """Measure the absorbing level P̂₀ from seeded trajectories.

    Seeds start on the spheres of radius ``levels`` (in turn).  P̂₀ is the
    largest tail value of ‖φ‖², and each seed enters {‖φ‖² <= P̂₀ + 1} at the
    reported time.
    """
    if n_seeds < 0:
        raise ValueError(f"n_seeds must be nonnegative, got {n_seeds}")
    if n_seeds == 0:
        return AbsorbingReport(0.0, [], list(levels), True, None, "no seeds")
    dt = dt or default_dt(ops.mesh, _problem(eps))
    runs = _run_all(
        _seed_jobs(ops, spec, eps, n_seeds, levels, seed, False, T, dt, stride, tol), jobs,
    )
    times = runs[0].times
    curves = np.array([r.ledger.column("phi_sq") for r in runs])
    n_tail = max(1, int(math.ceil(TAIL_FRACTION * times.size)))
    P0 = float(curves[:, -n_tail:].max())
    entries = [_entry_time(times, c, P0 + 1.0) for c in curves]
    absorbed = all(e <= T for e in entries)
    fit = fit_envelope(times, curves) if times.size >= MIN_SAMPLES else None
    msg = f"{n_seeds} seeds, P0={P0:.6g}, last entry at t={max(entries):.4g}"
    _LOGGER.info("eps=%g: %s", eps, msg)
    return AbsorbingReport(P0, entries, [float(l) for l in levels], absorbed, fit, msg)


# ---------------------------------------------------------------------------
# Extended phase space
# ---------------------------------------------------------------------------

def lift(zeta: ParState, spec: NonlinearitySpec, ops: Operators) -> ExtState:
    """Embed ζ = (u, γ) as (u, γ, v, δ) with the slaved velocity v = Δu − f(u).

    δ comes from the discrete boundary flux q = M_Γ⁻¹(M v + K u + m f(u))|_Γ
    as δ = −q − γ, the dynamic boundary condition solved for γ_t.
    """
    u = zeta.u
    b = ops.mesh.boundary_nodes
    gamma = zeta.gamma(b)
    v = parabolic_velocity(ops, spec, u)
    residual = ops.M_omega @ v + ops.K @ u + ops.lumped * spec.f(u)
    q = spla.spsolve(ops.M_gamma_bb.tocsc(), residual[b])
    return ExtState(u.copy(), np.asarray(gamma, dtype=float).copy(), v, -np.atleast_1d(q) - gamma)


def hyperbolic_ext(u: np.ndarray, v: np.ndarray, boundary_nodes: np.ndarray) -> ExtState:
    return ExtState(u.copy(), u[boundary_nodes].copy(), v.copy(), v[boundary_nodes].copy())


def stationarity_residual(ops: Operators, spec: NonlinearitySpec, u: np.ndarray) -> float:
    """‖Δ_h u − f(u)‖ in L²; zero exactly at discrete equilibria."""
    return math.sqrt(max(NormSuite(ops).l2_sq(parabolic_velocity(ops, spec, u)), 0.0))


class ExtMetric:
    """Euclidean embedding of 𝒳₁ through Cholesky factors of the Gram matrices."""

    def __init__(self, ops: Operators):
        self.ops = ops

    @cached_property
    def _factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ops = self.ops
        return (
            sla.cholesky(ops.robin.toarray()),
            sla.cholesky(ops.M_gamma_bb.toarray()),
            sla.cholesky(ops.M_omega.toarray()),
        )

    def embed(self, X: ExtState) -> np.ndarray:
        Ra, Rb, Rm = self._factors
        return np.concatenate([Ra @ X.u, Rb @ X.gamma, Rm @ X.v, Rb @ X.delta])

    def embed_all(self, points: Iterable[ExtState]) -> np.ndarray:
        return np.array([self.embed(p) for p in points])


def semidistance(A: Cloud, B: Cloud, ops: Operators) -> float:
    """dist(A, B) = max over a in A of min over b in B of ‖a − b‖_{𝒳₁}."""
    if len(A) == 0 or len(B) == 0:
        raise ValueError("semidistance needs nonempty clouds")
    metric = ExtMetric(ops)
    D = cdist(metric.embed_all(A.points), metric.embed_all(B.points))
    return float(D.min(axis=1).max())


def hausdorff(A: Cloud, B: Cloud, ops: Operators) -> float:
    return max(semidistance(A, B, ops), semidistance(B, A, ops))


# ---------------------------------------------------------------------------
# Clouds
# ---------------------------------------------------------------------------

def omega_cloud(
    ops: Operators,
    spec: NonlinearitySpec,
    eps: float,
    n_seeds: int = 20,
    t_transient: float = 50.0,
    t_sample: float = 20.0,
    dt: Optional[float] = None,
    stride: int = 10,
    seed: int = 0,
    levels: Sequence[float] = DEFAULT_LEVELS,
    well_prepared: bool = True,
    tol: float = DEFAULT_TOL,
    jobs: int = 1,
) -> Cloud:
    """Sample the ω-limit region: states with t >= ``t_transient`` from seeded runs."""
    if n_seeds < 1:
        raise ValueError(f"a cloud needs at least one seed, got {n_seeds}")
    dt = dt or default_dt(ops.mesh, _problem(eps))
    T = t_transient + t_sample
    runs = _run_all(
        _seed_jobs(ops, spec, eps, n_seeds, levels, seed, well_prepared, T, dt, stride, tol), jobs,
    )
    b = ops.mesh.boundary_nodes
    points, times, seeds = [], [], []
    for s, rec in enumerate(runs):
        for i in np.flatnonzero(rec.times >= t_transient - 1e-12):
            if eps > 0.0:
                points.append(hyperbolic_ext(rec.U[i], rec.V[i], b))
            else:
                points.append(lift(ParState(rec.U[i], float(rec.times[i])), spec, ops))
            times.append(float(rec.times[i]))
            seeds.append(s)
    _LOGGER.info("eps=%g cloud: %d points from %d seeds", eps, len(points), n_seeds)
    return Cloud(points, eps, times, seeds)


def cloud_saturation(cloud: Cloud, ops: Operators) -> float:
    """Semidistance from the cloud to its first-half-in-time prefix."""
    t = np.asarray(cloud.times)
    if t.size == 0:
        return 0.0
    mid = 0.5 * (t.min() + t.max())
    prefix = [p for p, ti in zip(cloud.points, t) if ti <= mid]
    return semidistance(cloud, Cloud(prefix, cloud.eps), ops)


def semicontinuity_sweep(
    eps_grid: Sequence[float],
    ops: Operators,
    spec: NonlinearitySpec,
    n_seeds: int = 20,
    t_transient: float = 50.0,
    t_sample: float = 20.0,
    dt: Optional[float] = None,
    stride: int = 10,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    jobs: int = 1,
) -> SweepResult:
    """dist_{𝒳₁}(A_ε, A₀) for each ε, with well-prepared seeds shared across ε.

    Every cloud, A₀ included, runs on one Δt so that sample times coincide and
    each hyperbolic sample has a parabolic partner from the same seed and time.
    """
    grid = sorted((float(e) for e in eps_grid), reverse=True)
    if not grid or any(e <= 0.0 for e in grid):
        raise ValueError(f"eps grid must hold positive values, got {list(eps_grid)}")
    if dt is None:
        dt = min(default_dt(ops.mesh, "hyperbolic"), default_dt(ops.mesh, "parabolic"))
    kw = dict(n_seeds=n_seeds, t_transient=t_transient, t_sample=t_sample, dt=dt,
              stride=stride, seed=seed, well_prepared=True, tol=tol, jobs=jobs)
    A0 = omega_cloud(ops, spec, 0.0, **kw)
    clouds = {0.0: A0}
    rows = []
    for e in grid:
        Ae = omega_cloud(ops, spec, e, **kw)
        clouds[e] = Ae
        d = semidistance(Ae, A0, ops)
        _LOGGER.info("eps=%g: dist(A_eps, A_0) = %.6g", e, d)
        rows.append(SweepRow(e, d, len(Ae), len(A0), t_sample))

    monotone = all(
        nxt.distance <= (1.0 + MONOTONE_TOLERANCE) * prev.distance
        for prev, nxt in zip(rows, rows[1:])
    )
    msg = "distance non-increasing as eps decreases" if monotone else "distance grows as eps decreases"
    msg += " (observed rates only; lifted eps=0 cloud is not an extended-flow attractor)"
    return SweepResult(rows, monotone, msg, dt=dt, clouds=clouds)
