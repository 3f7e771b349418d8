"""Mesh and assembled-operator models (1D intervals, 2D rectangles)."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __str__(self) -> str:
        return f"interval({self.a!r}, {self.b!r})"


@dataclass(frozen=True)
class Rectangle:
    ax: float
    bx: float
    ay: float
    by: float

    def __str__(self) -> str:
        return f"rectangle({self.ax!r}, {self.bx!r}, {self.ay!r}, {self.by!r})"


Domain = Union[Interval, Rectangle]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform simplicial mesh with its boundary markers.

    ``boundary_facets`` holds the facets of Γ: single nodes in 1D, edges
    (node pairs) in 2D.
    """
    dim: int
    coords: np.ndarray        # (n_nodes, dim)
    elements: np.ndarray      # (n_elements, dim + 1)
    boundary_nodes: np.ndarray
    boundary_facets: np.ndarray
    h_max: float
    domain: Domain
    resolution: int

    def __post_init__(self):
        for name in ("coords", "elements", "boundary_nodes", "boundary_facets"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_nodes.shape[0]

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True, eq=False)
class Operators:
    """Sparse P1 operators realizing the three bilinear forms of the weak form.

    ``lumped`` is the row-sum (lumped) interior mass used for every
    nonlinear term.  ``M_gamma_bb`` is ``M_gamma`` restricted to the boundary
    nodes, the Gram matrix of L²(Γ) for boundary-only fields.
    """
    mesh: Mesh
    M_omega: sp.csr_matrix
    K: sp.csr_matrix
    M_gamma: sp.csr_matrix
    lumped: np.ndarray = field(init=False)
    M_gamma_bb: sp.csr_matrix = field(init=False)

    def __post_init__(self):
        lumped = np.asarray(self.M_omega.sum(axis=1)).ravel()
        object.__setattr__(self, "lumped", _frozen(lumped))
        b = self.mesh.boundary_nodes
        object.__setattr__(self, "M_gamma_bb", self.M_gamma[b][:, b].tocsr())

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @cached_property
    def robin(self) -> sp.csr_matrix:
        """K + M_gamma, the Gram matrix of ‖·‖₁²."""
        return (self.K + self.M_gamma).tocsr()

    @cached_property
    def damping(self) -> sp.csr_matrix:
        """M_omega + M_gamma, the interior-plus-boundary velocity damping."""
        return (self.M_omega + self.M_gamma).tocsr()
