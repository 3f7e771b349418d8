"""Binary snapshot format for sampled trajectories, meshes, operators and clouds.

Layout (all little-endian)::

    b"RLXA1\\0"
    int64 dim, n_nodes, n_boundary, n_samples, n_columns
    n_columns x (uint16 length, utf-8 name)
    float64 payload, n_samples rows of n_columns values

Trajectories start with the column ``t``.  Other record kinds start with a
``kind:<name>`` column holding 1.0.  Meshes and operators are stored as
entry rows (part, i, j, value), one per array entry or sparse nonzero;
clouds hold one row per point.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from relaxa.schema.mesh import Interval, Mesh, Operators, Rectangle
from relaxa.schema.state import Cloud, ExtState, TrajectoryRecord

MAGIC = b"RLXA1\0"
_HEADER = struct.Struct("<5q")
_NAME_LEN = struct.Struct("<H")


class SnapshotError(ValueError):
    pass


@dataclass
class Snapshot:
    dim: int
    n_nodes: int
    n_boundary: int
    columns: list[str]
    data: np.ndarray             # (n_samples, n_columns) float64

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype="<f8")
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise SnapshotError(
                f"payload shape {self.data.shape} does not match {len(self.columns)} columns"
            )

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        """Columns named ``prefix:0`` ... ``prefix:N-1`` as an (n_samples, N) array."""
        idx = [i for i, c in enumerate(self.columns) if c.startswith(prefix + ":")]
        return self.data[:, idx]


def to_bytes(snap: Snapshot) -> bytes:
    parts = [MAGIC, _HEADER.pack(snap.dim, snap.n_nodes, snap.n_boundary,
                                  snap.n_samples, len(snap.columns))]
    for name in snap.columns:
        raw = name.encode("utf-8")
        parts.append(_NAME_LEN.pack(len(raw)))
        parts.append(raw)
    parts.append(snap.data.tobytes(order="C"))
    return b"".join(parts)


def from_bytes(buf: bytes) -> Snapshot:
    if not buf.startswith(MAGIC):
        raise SnapshotError("not a snapshot: bad magic")
    pos = len(MAGIC)
    if len(buf) < pos + _HEADER.size:
        raise SnapshotError("truncated header")
    dim, n_nodes, n_boundary, n_samples, n_columns = _HEADER.unpack_from(buf, pos)
    if min(dim, n_nodes, n_boundary, n_samples, n_columns) < 0:
        raise SnapshotError("negative size in header")
    pos += _HEADER.size
    columns = []
    for _ in range(n_columns):
        if len(buf) < pos + _NAME_LEN.size:
            raise SnapshotError("truncated column table")
        (length,) = _NAME_LEN.unpack_from(buf, pos)
        pos += _NAME_LEN.size
        if len(buf) < pos + length:
            raise SnapshotError("truncated column table")
        columns.append(buf[pos:pos + length].decode("utf-8"))
        pos += length
    expected = n_samples * n_columns * 8
    if len(buf) - pos != expected:
        raise SnapshotError(f"payload holds {len(buf) - pos} bytes, header says {expected}")
    data = np.frombuffer(buf, dtype="<f8", count=n_samples * n_columns, offset=pos)
    return Snapshot(dim, n_nodes, n_boundary, columns, data.reshape(n_samples, n_columns).copy())


def write_snapshot(snap: Snapshot, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(snap))


def read_snapshot(path: str | Path) -> Snapshot:
    return from_bytes(Path(path).read_bytes())


def snapshot_from_record(record: TrajectoryRecord, mesh: Mesh) -> Snapshot:
    """t, then u:i and u_t:i for every node, one row per sample."""
    n = mesh.n_nodes
    if record.U.shape[1:] != (n,):
        raise SnapshotError(f"record has {record.U.shape[1:]} nodes, mesh has {n}")
    columns = ["t"] + [f"u:{i}" for i in range(n)] + [f"u_t:{i}" for i in range(n)]
    data = np.column_stack([record.times, record.U, record.V])
    return Snapshot(mesh.dim, n, mesh.n_boundary, columns, data)


# ---------------------------------------------------------------------------
# Record kinds
# ---------------------------------------------------------------------------

KIND_PREFIX = "kind:"
_ENTRY_COLUMNS = ["part", "i", "j", "value"]
_MESH_PARTS = ("coords", "elements", "boundary_nodes", "boundary_facets", "scalars")
_OPERATOR_PARTS = ("M_omega", "K", "M_gamma")


def snapshot_kind(snap: Snapshot) -> str:
    """'trajectory', 'mesh', 'operators' or 'cloud', from the leading column."""
    first = snap.columns[0] if snap.columns else ""
    if first == "t":
        return "trajectory"
    if first.startswith(KIND_PREFIX):
        return first[len(KIND_PREFIX):]
    raise SnapshotError(f"unknown snapshot kind (first column {first!r})")


def _expect(snap: Snapshot, kind: str) -> None:
    found = snapshot_kind(snap)
    if found != kind:
        raise SnapshotError(f"expected a {kind} snapshot, got {found}")


def _entry_rows(part: int, i, j, values) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    return np.column_stack([np.ones_like(values), np.full_like(values, part),
                            np.asarray(i, dtype=float).ravel(), np.asarray(j, dtype=float).ravel(),
                            values])


def _dense_rows(part: int, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a = a.reshape(a.shape[0], -1)
    i, j = np.indices(a.shape)
    return _entry_rows(part, i, j, a)


def _part(snap: Snapshot, part: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = snap.data[snap.column("part") == part]
    return rows[:, 2].astype(np.int64), rows[:, 3].astype(np.int64), rows[:, 4]


def _dense_part(snap: Snapshot, part: int, shape: tuple[int, int]) -> np.ndarray:
    i, j, v = _part(snap, part)
    out = np.zeros(shape)
    if i.size and (i.max() >= shape[0] or j.max() >= shape[1]):
        raise SnapshotError(f"entry outside {_MESH_PARTS[part]} of shape {shape}")
    out[i, j] = v
    return out


def _rows_of(snap: Snapshot, part: int) -> int:
    i, _, _ = _part(snap, part)
    return int(i.max()) + 1 if i.size else 0


def mesh_to_snapshot(mesh: Mesh) -> Snapshot:
    d = mesh.domain
    bounds = [d.a, d.b] if isinstance(d, Interval) else [d.ax, d.bx, d.ay, d.by]
    scalars = np.array([mesh.h_max, float(mesh.resolution), *bounds]).reshape(-1, 1)
    blocks = [mesh.coords, mesh.elements, mesh.boundary_nodes.reshape(-1, 1), mesh.boundary_facets,
              scalars]
    data = np.vstack([_dense_rows(p, a) for p, a in enumerate(blocks)])
    return Snapshot(mesh.dim, mesh.n_nodes, mesh.n_boundary, [KIND_PREFIX + "mesh"] + _ENTRY_COLUMNS,
                    data)


def mesh_from_snapshot(snap: Snapshot) -> Mesh:
    _expect(snap, "mesh")
    dim, n = snap.dim, snap.n_nodes
    if dim not in (1, 2):
        raise SnapshotError(f"mesh dimension must be 1 or 2, got {dim}")
    scalars = _dense_part(snap, 4, (_rows_of(snap, 4), 1)).ravel()
    if scalars.size != 2 + 2 * dim:
        raise SnapshotError(f"mesh scalars hold {scalars.size} values, expected {2 + 2 * dim}")
    bounds = [float(x) for x in scalars[2:]]
    domain = Interval(*bounds) if dim == 1 else Rectangle(*bounds)
    return Mesh(
        dim=dim,
        coords=_dense_part(snap, 0, (n, dim)),
        elements=_dense_part(snap, 1, (_rows_of(snap, 1), dim + 1)).astype(np.int64),
        boundary_nodes=_dense_part(snap, 2, (snap.n_boundary, 1)).ravel().astype(np.int64),
        boundary_facets=_dense_part(snap, 3, (_rows_of(snap, 3), dim)).astype(np.int64),
        h_max=float(scalars[0]),
        domain=domain,
        resolution=int(scalars[1]),
    )


def operators_to_snapshot(ops: Operators) -> Snapshot:
    """COO entries of M_omega, K and M_gamma; the mesh is stored separately."""
    blocks = []
    for p, name in enumerate(_OPERATOR_PARTS):
        coo = getattr(ops, name).tocoo()
        blocks.append(_entry_rows(p, coo.row, coo.col, coo.data))
    mesh = ops.mesh
    return Snapshot(mesh.dim, mesh.n_nodes, mesh.n_boundary,
                    [KIND_PREFIX + "operators"] + _ENTRY_COLUMNS, np.vstack(blocks))


def operators_from_snapshot(snap: Snapshot, mesh: Mesh) -> Operators:
    _expect(snap, "operators")
    n = mesh.n_nodes
    if (snap.dim, snap.n_nodes, snap.n_boundary) != (mesh.dim, n, mesh.n_boundary):
        raise SnapshotError(
            f"operators for {snap.n_nodes} nodes in {snap.dim}D do not fit a mesh of {n} nodes"
        )
    mats = {}
    for p, name in enumerate(_OPERATOR_PARTS):
        i, j, v = _part(snap, p)
        if i.size and (i.max() >= n or j.max() >= n):
            raise SnapshotError(f"{name} entry outside {n} x {n}")
        mats[name] = sp.csr_matrix((v, (i, j)), shape=(n, n))
    return Operators(mesh=mesh, **mats)


def cloud_to_snapshot(cloud: Cloud, mesh: Mesh) -> Snapshot:
    """One row per point: ε, sample time, seed, then u, γ, v, δ."""
    n, nb, k = mesh.n_nodes, mesh.n_boundary, len(cloud)
    if cloud.points[0].u.shape != (n,) or cloud.points[0].gamma.shape != (nb,):
        raise SnapshotError(f"cloud points do not live on a mesh of {n} nodes")
    times = np.asarray(cloud.times, dtype=float) if cloud.times else np.full(k, np.nan)
    seeds = np.asarray(cloud.seeds, dtype=float) if cloud.seeds else np.full(k, -1.0)
    columns = ([KIND_PREFIX + "cloud", "eps", "t", "seed"]
               + [f"u:{i}" for i in range(n)] + [f"gamma:{i}" for i in range(nb)]
               + [f"v:{i}" for i in range(n)] + [f"delta:{i}" for i in range(nb)])
    data = np.column_stack([np.ones(k), np.full(k, cloud.eps), times, seeds, cloud.matrix()])
    return Snapshot(mesh.dim, n, nb, columns, data)


def cloud_from_snapshot(snap: Snapshot) -> Cloud:
    _expect(snap, "cloud")
    if snap.n_samples == 0:
        raise SnapshotError("cloud snapshot holds no points")
    U, G, V, D = (snap.block(p) for p in ("u", "gamma", "v", "delta"))
    points = [ExtState(U[r].copy(), G[r].copy(), V[r].copy(), D[r].copy()) for r in range(snap.n_samples)]
    times = snap.column("t")
    seeds = snap.column("seed")
    return Cloud(
        points,
        float(snap.column("eps")[0]),
        times=[] if np.all(np.isnan(times)) else [float(t) for t in times],
        seeds=[] if np.all(seeds < 0.0) else [int(s) for s in seeds],
    )
