"""relaxa -- CLI entry point.

Usage:
    relaxa solve  --config FILE [--out DIR] [--seed N]
    relaxa eigen  --config FILE
    relaxa split  --config FILE [--out DIR] [--seed N]
    relaxa limit  --config FILE [--out DIR] [--seed N] [--jobs N]
    relaxa verify PATH... [--config FILE] [--out DIR]

Commands:
    solve     march one trajectory; writes ledger.csv, steps.csv, trajectory.rlxa
    eigen     Poincaré constant λ of the configured mesh
    split     Z/K splitting and the difference splitting of two seeds
    limit     absorbing radius per ε and the ε → 0 semicontinuity sweep; writes
              absorbing.csv, sweep.csv, mesh.rlxa, operators.rlxa, cloud_eps*.rlxa
    verify    certify ledger CSVs; exit status 1 when any estimate is violated

The log level is read from RLXA_LOG (DEBUG, INFO, WARNING, ERROR).
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from relaxa.analysis.attractor import absorbing_radius, semicontinuity_sweep
from relaxa.analysis.decomposition import difference_ledger, difference_split, solve_split, split_ledger
from relaxa.analysis.functionals import (
    EigenError,
    SandwichBounds,
    default_beta,
    energy_observer,
    poincare_constant,
    rates,
)
from relaxa.analysis.verify import Targets, certify_run, report_text
from relaxa.fem.mesh import MeshError, domain_measure
from relaxa.parser.config_parser import ConfigParseError, ExperimentConfig, dump_config, parse_config_file
from relaxa.nonlinearity import check_assumptions
from relaxa.schema.nonlinearity import NonlinearityError
from relaxa.schema.params import FunctionalParams, ParamsError
from relaxa.schema.reports import VIOLATED
from relaxa.serializer.csv_serializer import fmt, read_ledger, write_ledger, write_report, write_steps, write_sweep
from relaxa.serializer.snapshot import (
    SnapshotError,
    cloud_to_snapshot,
    mesh_to_snapshot,
    operators_to_snapshot,
    snapshot_from_record,
    write_snapshot,
)
from relaxa.solver.stepper import StepFailure
from relaxa.solver.trajectory import default_dt, initial_state, seed_rngs, solve_trajectory

_LOGGER = logging.getLogger("relaxa")

EXIT_OK, EXIT_VIOLATED, EXIT_ERROR = 0, 1, 2
_ERRORS = (ConfigParseError, MeshError, NonlinearityError, ParamsError, EigenError,
           StepFailure, SnapshotError, OSError, ValueError)


def configure_logging() -> None:
    level = os.environ.get("RLXA_LOG", "WARNING").upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    _LOGGER.handlers[:] = [handler]
    _LOGGER.setLevel(getattr(logging, level, logging.WARNING))


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.used").write_text(dump_config(cfg), encoding="utf-8")
    return out


def _problem(cfg: ExperimentConfig) -> str:
    if cfg.problem == "hyperbolic" and cfg.eps == 0.0:
        raise ConfigParseError("hyperbolic runs need eps > 0")
    return cfg.problem


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_solve(cfg: ExperimentConfig) -> int:
    problem = _problem(cfg)
    ops = cfg.operators()
    lam, _ = poincare_constant(ops)
    params = cfg.validate(lam)
    spec = cfg.shifted_spec()
    eps = cfg.eps if problem == "hyperbolic" else 0.0
    rng = seed_rngs(cfg.seed, 1)[0]
    init = initial_state(cfg.init.kind, cfg.init.value, ops, spec, eps, rng, cfg.well_prepared)
    dt = cfg.dt or default_dt(ops.mesh, problem)
    observers = []
    if problem == "hyperbolic":
        report = check_assumptions(spec, lam, measure=domain_measure(ops.mesh), mu=params.mu)
        bounds = SandwichBounds(ops, spec, params, report.c2)
        observers.append(energy_observer(ops, spec, params, bounds))
    record = solve_trajectory(problem, init, cfg.T, dt, ops, spec, tol=cfg.tol,
                              max_newton=cfg.max_newton, observers=observers, stride=cfg.stride)

    out = _out_dir(cfg)
    write_ledger(record.ledger, out / "ledger.csv")
    write_steps(record.steps, out / "steps.csv")
    write_snapshot(snapshot_from_record(record, ops.mesh), out / "trajectory.rlxa")
    print(f"OK  solve {problem} eps={fmt(eps)}: {record.n_samples} samples, "
          f"{len(record.steps)} steps, balance defect {record.energy_balance_defect():.3e}")
    return EXIT_OK


def cmd_eigen(cfg: ExperimentConfig) -> int:
    ops = cfg.operators()
    lam, _ = poincare_constant(ops)
    lam_lumped, _ = poincare_constant(ops, mass="lumped")
    print(f"lambda = {fmt(lam)}")
    print(f"lambda_lumped = {fmt(lam_lumped)}")
    print(f"nodes = {ops.n_nodes}")
    try:
        params = cfg.validate(lam)
    except ParamsError as exc:
        print(f"params = inadmissible ({exc})")
        return EXIT_OK
    for name, value in rates(params).items():
        print(f"{name} = {'fitted' if value is None else fmt(value)}")
    return EXIT_OK


def cmd_split(cfg: ExperimentConfig) -> int:
    if cfg.eps == 0.0:
        raise ConfigParseError("split runs need eps > 0")
    ops = cfg.operators()
    lam, _ = poincare_constant(ops)
    cfg.validate(lam)
    spec = cfg.f
    rng_a, rng_b = seed_rngs(cfg.seed, 2)
    phi0 = initial_state(cfg.init.kind, cfg.init.value, ops, spec, cfg.eps, rng_a, cfg.well_prepared)
    beta = cfg.beta if cfg.beta is not None else default_beta(spec, float(abs(phi0.u).max()))
    params = FunctionalParams.defaults(lam, cfg.eps, beta, window="V", mu=cfg.mu)
    dt = cfg.dt or default_dt(ops.mesh, "hyperbolic")
    split = solve_split(phi0, cfg.T, dt, ops, spec, beta=beta, tol=cfg.tol,
                        max_newton=cfg.max_newton, stride=cfg.stride, v_mode=cfg.v_mode, with_h=True)

    theta0 = initial_state("random", cfg.init.value, ops, spec, cfg.eps, rng_b, cfg.well_prepared)
    diff = difference_split(phi0, theta0, ops, spec, dt, tol=cfg.tol, max_newton=cfg.max_newton,
                            lam=lam)

    out = _out_dir(cfg)
    write_ledger(split_ledger(split, params, ops, spec), out / "split_ledger.csv")
    write_ledger(difference_ledger(diff), out / "difference_ledger.csv")
    t_star = "none" if diff.t_star is None else fmt(diff.t_star)
    print(f"OK  split eps={fmt(cfg.eps)} beta={fmt(beta)}: max defect {split.defect.max():.3e}, "
          f"t*={t_star}, alpha_hat={fmt(diff.alpha_hat)}")
    return EXIT_OK


def cmd_limit(cfg: ExperimentConfig, jobs: int) -> int:
    ops = cfg.operators()
    lam, _ = poincare_constant(ops)
    cfg.validate(lam)
    spec = cfg.shifted_spec()
    out = _out_dir(cfg)

    with open(out / "absorbing.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "P0", "max_entry_time", "absorbed", "omega", "Q"])
        for e in cfg.eps_grid:
            rep = absorbing_radius(ops, spec, e, n_seeds=cfg.n_seeds, T=cfg.T, dt=cfg.dt,
                                   levels=cfg.levels, seed=cfg.seed, stride=cfg.stride,
                                   tol=cfg.tol, jobs=jobs)
            fit = rep.fit
            w.writerow([fmt(e), fmt(rep.P0), fmt(max(rep.entry_times, default=0.0)),
                        fmt(rep.absorbed), fmt(fit.omega if fit else float("nan")),
                        fmt(fit.Q if fit else float("nan"))])
            print(f"{'OK ' if rep.absorbed else 'FAIL'} absorbing eps={fmt(e)}: {rep.message}")

    sweep = semicontinuity_sweep(cfg.eps_grid, ops, spec, n_seeds=cfg.n_seeds,
                                 t_transient=cfg.t_transient, t_sample=cfg.t_sample, dt=cfg.dt,
                                 stride=cfg.stride, seed=cfg.seed, tol=cfg.tol, jobs=jobs)
    write_sweep(sweep.rows, out / "sweep.csv")
    write_snapshot(mesh_to_snapshot(ops.mesh), out / "mesh.rlxa")
    write_snapshot(operators_to_snapshot(ops), out / "operators.rlxa")
    for e, cloud in sweep.clouds.items():
        write_snapshot(cloud_to_snapshot(cloud, ops.mesh), out / f"cloud_eps{e:g}.rlxa")
    for row in sweep.rows:
        print(f"  eps={fmt(row.eps)}  dist={row.distance:.6g}  ({row.n_points_a} vs {row.n_points_b} points)")
    print(f"{'OK ' if sweep.monotone else 'FAIL'} limit: {sweep.message}")
    return EXIT_OK


def _ledger_paths(paths: list[str]) -> list[Path]:
    found: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(p.glob("*ledger*.csv")))
        elif p.exists():
            found.append(p)
        else:
            raise OSError(f"no such file or directory: {p}")
    return found


def cmd_verify(paths: list[str], cfg: Optional[ExperimentConfig], out: Optional[str]) -> int:
    targets = Targets() if cfg is None else Targets(tol=cfg.tol)
    ledgers = {str(p): read_ledger(p) for p in _ledger_paths(paths)}
    report = certify_run(ledgers, targets)
    text = report_text(report)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        Path(out, "report.txt").write_text(text, encoding="utf-8")
        write_report(report, Path(out, "report.csv"))
    print(text, end="")
    for e in report:
        print(f"  {'FAIL' if e.status == VIOLATED else 'OK  '} {e.estimate}: {e.status} ({e.message})")
    print(f"\nCertified {len(report)} estimates, {report.count(VIOLATED)} violated")
    return EXIT_VIOLATED if report.any_violated else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaxa",
        description="Hyperbolic relaxation solver and verification suite",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "eigen", "split", "limit"):
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", required=True, help="Experiment configuration file")
        p.add_argument("--out", "-o", help="Output directory (overrides 'out')")
        p.add_argument("--seed", type=int, help="Base seed (overrides 'seed')")
        if name == "limit":
            p.add_argument("--jobs", "-j", type=int, default=1, help="Parallel seed workers")
    p = sub.add_parser("verify")
    p.add_argument("paths", nargs="+", help="Ledger CSV files or directories holding them")
    p.add_argument("--config", "-c", help="Configuration whose tolerances the runs used")
    p.add_argument("--out", "-o", help="Directory for report.txt and report.csv")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = parse_config_file(args.config) if args.config else None
        if args.command == "verify":
            return cmd_verify(args.paths, cfg, args.out)
        if cfg is None:
            raise ConfigParseError("a configuration file is required")
        cfg = cfg.with_overrides(out=args.out, seed=args.seed)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "eigen":
            return cmd_eigen(cfg)
        if args.command == "split":
            return cmd_split(cfg)
        return cmd_limit(cfg, args.jobs)
    except _ERRORS as exc:
        _LOGGER.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
