"""CSV output: ledgers, step reports, sweep tables and certification reports.

Floats are written with 17 significant digits so a ledger read back is
bit-identical.  Column order is documented in docs/csv-schema.md.
"""
from __future__ import annotations

import csv
from dataclasses import astuple, fields
from pathlib import Path
from typing import Iterable

from relaxa.schema.ledger import EnergyLedger
from relaxa.schema.reports import CertificationReport, SweepRow
from relaxa.schema.state import StepReport

STEP_COLUMNS = tuple(f.name for f in fields(StepReport))
SWEEP_COLUMNS = tuple(f.name for f in fields(SweepRow))
REPORT_COLUMNS = ("estimate", "status", "detail", "source")


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def _write(path: str | Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_ledger(ledger: EnergyLedger, path: str | Path) -> None:
    names = ledger.names
    cols = [ledger.column(n) for n in names]
    rows = ([t] + [float(c[i]) for c in cols] for i, t in enumerate(ledger.times))
    _write(path, ["t", *names], rows)


def read_ledger(path: str | Path) -> EnergyLedger:
    ledger = EnergyLedger()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t":
            raise ValueError(f"{path}: not a ledger (first column must be 't')")
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            ledger.record(float(row[0]), **{h: float(v) for h, v in zip(header[1:], row[1:])})
    return ledger


def write_steps(steps: list[StepReport], path: str | Path) -> None:
    _write(path, STEP_COLUMNS, (astuple(s) for s in steps))


def write_sweep(rows: list[SweepRow], path: str | Path) -> None:
    _write(path, SWEEP_COLUMNS, (astuple(r) for r in rows))


def write_report(report: CertificationReport, path: str | Path) -> None:
    def detail(e):
        return ";".join(f"{k}={fmt(float(v))}" for k, v in e.detail.items())

    _write(path, REPORT_COLUMNS, ((e.estimate, e.status, detail(e), e.message) for e in report))
