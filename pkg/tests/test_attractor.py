"""Tests for the lift, the 𝒳₁ semidistance, absorbing radii and the ε → 0 sweep."""
import math

import numpy as np
import pytest
import scipy.linalg as sla

from relaxa.analysis.attractor import (
    ExtMetric,
    absorbing_radius,
    cloud_saturation,
    hausdorff,
    hyperbolic_ext,
    lift,
    omega_cloud,
    semicontinuity_sweep,
    semidistance,
    stationarity_residual,
)
from relaxa.fem.assembly import assemble
from relaxa.fem.mesh import build_mesh
from relaxa.fem.norms import NormSuite
from relaxa.nonlinearity import doublewell, linear
from relaxa.schema.mesh import Interval
from relaxa.schema.state import Cloud, ExtState, HypState, ParState
from relaxa.solver.trajectory import bump_field, solve_trajectory, well_prepared_velocity


def _random_point(ops, rng, scale=1.0):
    n, nb = ops.n_nodes, ops.mesh.n_boundary
    return ExtState(*(scale * rng.normal(size=k) for k in (n, nb, n, nb)))


def _minus(X, Y):
    return ExtState(X.u - Y.u, X.gamma - Y.gamma, X.v - Y.v, X.delta - Y.delta)


# ---------------------------------------------------------------------------
# Lift
# ---------------------------------------------------------------------------

def test_lift_of_constant(dw):
    ops = assemble(build_mesh(Interval(0.0, 1.0), 64))
    b = ops.mesh.boundary_nodes
    X = lift(ParState(np.ones(ops.n_nodes), 1.0), dw, ops)
    assert abs(X.v[32] - 1.0) <= 1e-6
    assert np.all(np.abs(X.delta + 1.0) <= 0.05)
    assert np.array_equal(X.gamma, [1.0, 1.0])
    assert np.allclose(X.delta, X.v[b], atol=1e-10)


def test_lift_with_mismatched_trace(interval_ops, dw, rng):
    b = interval_ops.mesh.boundary_nodes
    u = rng.normal(size=interval_ops.n_nodes)
    g = np.array([0.3, -0.2])
    X = lift(ParState(u, 0.0, gamma0=g), dw, interval_ops)
    assert np.array_equal(X.gamma, g)
    assert np.allclose(X.delta, X.v[b] + u[b] - g, atol=1e-10)


def test_lift_of_zero(interval_ops, dw):
    X = lift(ParState(np.zeros(interval_ops.n_nodes), 1.0), dw, interval_ops)
    assert not X.flat().any()
    assert stationarity_residual(interval_ops, dw, np.zeros(interval_ops.n_nodes)) == 0.0


def test_hyperbolic_ext_takes_traces(interval_ops, rng):
    u, v = rng.normal(size=(2, interval_ops.n_nodes))
    X = hyperbolic_ext(u, v, interval_ops.mesh.boundary_nodes)
    assert np.array_equal(X.gamma, u[[0, -1]])
    assert np.array_equal(X.delta, v[[0, -1]])


# ---------------------------------------------------------------------------
# Semidistance
# ---------------------------------------------------------------------------

def test_embedding_is_isometric(interval_ops, rng):
    metric = ExtMetric(interval_ops)
    norms = NormSuite(interval_ops)
    X = _random_point(interval_ops, rng)
    assert float(metric.embed(X) @ metric.embed(X)) == pytest.approx(norms.ext_sq(X, 1.0), rel=1e-12)


def test_semidistance_of_cloud_to_itself(interval_ops, rng):
    A = Cloud([_random_point(interval_ops, rng) for _ in range(5)], 1.0)
    assert semidistance(A, A, interval_ops) == 0.0
    assert A.matrix().shape == (5, 2 * interval_ops.n_nodes + 4)


def test_single_pair_distance(interval_ops):
    n, nb = interval_ops.n_nodes, interval_ops.mesh.n_boundary
    e = np.zeros(n)
    e[n // 2] = 1.0
    a = 3.0 * e / math.sqrt(float(e @ (interval_ops.robin @ e)))
    c = 4.0 * e / math.sqrt(float(e @ (interval_ops.M_omega @ e)))
    zero = ExtState(np.zeros(n), np.zeros(nb), np.zeros(n), np.zeros(nb))
    X = ExtState(a, np.zeros(nb), c, np.zeros(nb))
    assert semidistance(Cloud([X], 1.0), Cloud([zero], 1.0), interval_ops) == pytest.approx(5.0)


def test_semidistance_against_brute_force(interval_ops, rng):
    norms = NormSuite(interval_ops)
    A = Cloud([_random_point(interval_ops, rng) for _ in range(6)], 0.5)
    B = Cloud([_random_point(interval_ops, rng, 0.5) for _ in range(4)], 0.0)
    brute = max(min(math.sqrt(norms.ext_sq(_minus(a, b), 1.0)) for b in B.points) for a in A.points)
    assert semidistance(A, B, interval_ops) == pytest.approx(brute, rel=1e-10)
    assert hausdorff(A, B, interval_ops) == pytest.approx(hausdorff(B, A, interval_ops))
    assert hausdorff(A, B, interval_ops) >= semidistance(A, B, interval_ops)


def test_semidistance_of_subset_is_zero(interval_ops, rng):
    points = [_random_point(interval_ops, rng) for _ in range(4)]
    assert semidistance(Cloud(points[:2], 1.0), Cloud(points, 1.0), interval_ops) == 0.0
    assert semidistance(Cloud(points, 1.0), Cloud(points[:2], 1.0), interval_ops) > 0.0


def test_empty_cloud_is_rejected():
    with pytest.raises(ValueError):
        Cloud([], 1.0)


# ---------------------------------------------------------------------------
# Absorbing radius and clouds
# ---------------------------------------------------------------------------

def test_absorbing_radius_without_seeds(interval_ops, dw):
    rep = absorbing_radius(interval_ops, dw, 1.0, n_seeds=0)
    assert rep.P0 == 0.0
    assert rep.absorbed
    assert rep.fit is None
    with pytest.raises(ValueError):
        absorbing_radius(interval_ops, dw, 1.0, n_seeds=-1)


def test_small_absorbing_run(interval_ops, dw):
    rep = absorbing_radius(interval_ops, dw, 1.0, n_seeds=3, T=2.0, dt=0.05, levels=(1.0, 2.0))
    assert rep.absorbed
    assert len(rep.entry_times) == 3
    assert rep.P0 >= 0.0
    assert rep.levels == [1.0, 2.0]
    assert rep.fit is not None
    assert all(0.0 <= e <= 2.0 for e in rep.entry_times)


def test_linear_cloud_collapses_to_zero(interval_ops):
    spec = linear(1.0)
    norms = NormSuite(interval_ops)
    cloud = omega_cloud(interval_ops, spec, 1.0, n_seeds=2, t_transient=20.0, t_sample=1.0,
                        stride=16, levels=(1.0,))
    assert len(cloud) >= 2
    assert set(cloud.seeds) == {0, 1}
    assert all(t >= 20.0 - 1e-9 for t in cloud.times)
    assert max(math.sqrt(norms.ext_sq(p, 1.0)) for p in cloud.points) <= 1e-2
    assert cloud_saturation(cloud, interval_ops) <= 1e-2


def test_parabolic_cloud_is_lifted(interval_ops):
    spec = linear(1.0)
    cloud = omega_cloud(interval_ops, spec, 0.0, n_seeds=1, t_transient=1.0, t_sample=0.5, stride=10,
                        levels=(1.0,))
    assert cloud.eps == 0.0
    b = interval_ops.mesh.boundary_nodes
    for p in cloud.points:
        assert np.allclose(p.delta, p.v[b], atol=1e-10)


def test_omega_cloud_needs_a_seed(interval_ops, dw):
    with pytest.raises(ValueError):
        omega_cloud(interval_ops, dw, 1.0, n_seeds=0)


# ---------------------------------------------------------------------------
# Semicontinuity sweep
# ---------------------------------------------------------------------------

def test_sweep_single_row(interval_ops):
    result = semicontinuity_sweep([0.5], interval_ops, linear(1.0), n_seeds=1, t_transient=1.0,
                                  t_sample=0.5, stride=10)
    assert len(result.rows) == 1
    assert result.monotone
    row = result.rows[0]
    assert row.eps == 0.5
    assert row.distance >= 0.0
    assert row.n_points_a >= 1 and row.n_points_b >= 1


@pytest.mark.parametrize("grid", [[], [0.5, 0.0], [-0.1]])
def test_sweep_rejects_bad_grid(interval_ops, grid):
    with pytest.raises(ValueError):
        semicontinuity_sweep(grid, interval_ops, linear(1.0), n_seeds=1)


@pytest.mark.slow
def test_sweep_orders_rows_by_decreasing_eps(interval_ops):
    result = semicontinuity_sweep([0.1, 0.5], interval_ops, linear(1.0), n_seeds=2, t_transient=5.0,
                                  t_sample=1.0, stride=10)
    assert [r.eps for r in result.rows] == [0.5, 0.1]
    assert all(r.n_points_b == result.rows[0].n_points_b for r in result.rows)


@pytest.mark.slow
def test_linear_limit_is_first_order_against_exponential():
    ops = assemble(build_mesh(Interval(0.0, 1.0), 8))
    spec = linear(0.0)
    norms = NormSuite(ops)
    A, D = ops.robin.toarray(), ops.damping.toarray()
    _, X = sla.eigh(A, D)
    u0 = X[:, 0] / norms.norm_H1(X[:, 0])
    G = -np.linalg.solve(D, A)
    grid = (0.2, 0.1, 0.05, 0.025)
    errors = []
    for eps in grid:
        init = HypState(u0, well_prepared_velocity(ops, spec, u0), 0.0, eps)
        rec = solve_trajectory("hyperbolic", init, 5.0, 0.002, ops, spec, tol=1e-12, stride=50)
        errors.append(max(norms.norm_H1(u - sla.expm(G * t) @ u0) for t, u in zip(rec.times, rec.U)))
    slope = np.polyfit(np.log(grid), np.log(errors), 1)[0]
    assert slope >= 0.95
    assert errors[-1] < errors[0]


@pytest.mark.slow
def test_parallel_seeds_match_serial(interval_ops, dw):
    serial = absorbing_radius(interval_ops, dw, 1.0, n_seeds=4, T=1.0, dt=0.05, jobs=1)
    parallel = absorbing_radius(interval_ops, dw, 1.0, n_seeds=4, T=1.0, dt=0.05, jobs=2)
    assert serial.P0 == parallel.P0
    assert serial.entry_times == parallel.entry_times


def test_sweep_clouds_share_seeds_and_times(interval_ops, dw):
    result = semicontinuity_sweep([0.1, 0.5], interval_ops, dw, n_seeds=2, t_transient=0.0,
                                  t_sample=0.2, stride=5)
    assert result.dt == pytest.approx(0.01)
    assert sorted(result.clouds) == [0.0, 0.1, 0.5]
    A0 = result.clouds[0.0]
    for e in (0.5, 0.1):
        Ae = result.clouds[e]
        np.testing.assert_allclose(np.asarray(Ae.times), np.asarray(A0.times), rtol=0, atol=1e-12)
        assert list(Ae.seeds) == list(A0.seeds)
        np.testing.assert_allclose(Ae.points[0].u, A0.points[0].u, rtol=0, atol=1e-14)


@pytest.mark.slow
def test_doublewell_sweep_distance_shrinks_with_eps(interval_ops, dw):
    result = semicontinuity_sweep([0.5, 0.1, 0.02], interval_ops, dw, n_seeds=6, t_transient=1.0,
                                  t_sample=4.0, stride=10, dt=0.01)
    assert [r.eps for r in result.rows] == [0.5, 0.1, 0.02]
    assert result.rows[-1].distance < result.rows[0].distance


@pytest.mark.slow
def test_absorbing_level_is_uniform_in_eps():
    ops = assemble(build_mesh(Interval(0.0, 1.0), 32))
    spec = doublewell(1.0)
    reports = {eps: absorbing_radius(ops, spec, eps, n_seeds=20, T=20.0, dt=0.01)
               for eps in (1.0, 0.1, 0.01)}
    for rep in reports.values():
        assert rep.absorbed
        assert rep.fit is not None and rep.fit.passed
        assert rep.fit.omega > 0.0
    levels = [rep.P0 for rep in reports.values()]
    assert min(levels) > 0.0
    assert max(levels) <= 3.0 * min(levels)

    entries = np.array(reports[1.0].entry_times)
    start = np.array([reports[1.0].levels[i % 3] for i in range(20)])
    assert entries[start == 10.0].mean() > entries[start == 1.0].mean()
