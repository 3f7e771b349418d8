"""Uniform simplicial meshes of an interval or a rectangle.

Node numbering is lexicographic: in 2D node (i, j) of the (n+1)×(n+1) grid
has id ``j*(n+1) + i``.  Every grid square is cut along its (0,0)–(1,1)
diagonal into two counter-clockwise triangles.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from relaxa.schema.mesh import Domain, Interval, Mesh, Rectangle

_LOGGER = logging.getLogger(__name__)


class MeshError(ValueError):
    pass


def _check_resolution(n) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise MeshError(f"resolution must be an integer, got {n!r}")
    n = int(n)
    if n < 1:
        raise MeshError(f"resolution must be at least 1, got {n}")
    return n


def _check_span(lo: float, hi: float, axis: str) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise MeshError(f"non-finite {axis}-extent [{lo}, {hi}]")
    if not hi > lo:
        raise MeshError(f"degenerate {axis}-extent: need {hi} > {lo}")


def _interval_mesh(domain: Interval, n: int) -> Mesh:
    _check_span(domain.a, domain.b, "x")
    coords = np.linspace(domain.a, domain.b, n + 1).reshape(-1, 1)
    idx = np.arange(n)
    elements = np.column_stack([idx, idx + 1])
    boundary = np.array([0, n])
    return Mesh(
        dim=1,
        coords=coords,
        elements=elements,
        boundary_nodes=boundary,
        boundary_facets=boundary.reshape(-1, 1),
        h_max=(domain.b - domain.a) / n,
        domain=domain,
        resolution=n,
    )


def _rectangle_mesh(domain: Rectangle, n: int) -> Mesh:
    _check_span(domain.ax, domain.bx, "x")
    _check_span(domain.ay, domain.by, "y")
    xs = np.linspace(domain.ax, domain.bx, n + 1)
    ys = np.linspace(domain.ay, domain.by, n + 1)
    X, Y = np.meshgrid(xs, ys)          # row j holds y = ys[j]
    coords = np.column_stack([X.ravel(), Y.ravel()])

    def node(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    n00, n10, n01, n11 = node(i, j), node(i + 1, j), node(i, j + 1), node(i + 1, j + 1)
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    elements = np.vstack([lower, upper])

    k = np.arange(n)
    edges = np.vstack([
        np.column_stack([node(k, 0), node(k + 1, 0)]),          # bottom
        np.column_stack([node(n, k), node(n, k + 1)]),          # right
        np.column_stack([node(k + 1, n), node(k, n)]),          # top
        np.column_stack([node(0, k + 1), node(0, k)]),          # left
    ])
    boundary = np.unique(edges)
    hx = (domain.bx - domain.ax) / n
    hy = (domain.by - domain.ay) / n
    return Mesh(
        dim=2,
        coords=coords,
        elements=elements,
        boundary_nodes=boundary,
        boundary_facets=edges,
        h_max=math.hypot(hx, hy),
        domain=domain,
        resolution=n,
    )


def build_mesh(domain: Domain, n: int) -> Mesh:
    """Build the uniform P1 mesh of ``domain`` with ``n`` cells per axis."""
    n = _check_resolution(n)
    if isinstance(domain, Interval):
        mesh = _interval_mesh(domain, n)
    elif isinstance(domain, Rectangle):
        mesh = _rectangle_mesh(domain, n)
    else:
        raise MeshError(f"unsupported domain {domain!r}")
    _LOGGER.debug(
        "built %s: %d nodes, %d elements, %d boundary nodes, h_max=%g",
        domain, mesh.n_nodes, mesh.n_elements, mesh.n_boundary, mesh.h_max,
    )
    return mesh


def element_volumes(mesh: Mesh) -> np.ndarray:
    """Signed lengths (1D) or areas (2D) of all elements."""
    x = mesh.coords[mesh.elements]               # (n_el, dim+1, dim)
    if mesh.dim == 1:
        return (x[:, 1, 0] - x[:, 0, 0])
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def domain_measure(mesh: Mesh) -> float:
    """|Ω|."""
    return float(element_volumes(mesh).sum())


def check_field(mesh: Mesh, u: np.ndarray, name: str = "u") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise MeshError(f"{name} has shape {u.shape}, mesh has {mesh.n_nodes} nodes")
    return u
