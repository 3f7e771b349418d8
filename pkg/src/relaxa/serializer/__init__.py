"""Snapshot binaries and CSV tables."""
from relaxa.serializer.csv_serializer import read_ledger, write_ledger, write_report, write_steps, write_sweep
from relaxa.serializer.snapshot import (
    Snapshot,
    SnapshotError,
    read_snapshot,
    snapshot_from_record,
    write_snapshot,
)
