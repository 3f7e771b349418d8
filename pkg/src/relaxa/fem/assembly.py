"""P1 assembly of the interior mass, stiffness and boundary mass matrices.

All element integrals are exact for piecewise-linear functions.  Element
matrices are computed for every element at once and scattered into COO
triplets; duplicates are summed by the CSR conversion.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp

from relaxa.fem.mesh import MeshError, element_volumes
from relaxa.schema.mesh import Mesh, Operators

_LOGGER = logging.getLogger(__name__)

_MASS_1D = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_MASS_2D = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def _scatter(conn: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum per-element matrices ``local`` (n_el, k, k) over connectivity ``conn``."""
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel()
    cols = np.tile(conn, (1, k)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def _symmetrize(A: sp.csr_matrix) -> sp.csr_matrix:
    return ((A + A.T) * 0.5).tocsr()


def _barycentric_gradients(mesh: Mesh, vol: np.ndarray) -> np.ndarray:
    """∇λ_a on every triangle, shape (n_el, 3, 2)."""
    x = mesh.coords[mesh.elements]
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    twice = 2.0 * vol
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / twice[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / twice[:, None]
    g0 = -(g1 + g2)
    return np.stack([g0, g1, g2], axis=1)


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    vol = element_volumes(mesh)
    ref = _MASS_1D if mesh.dim == 1 else _MASS_2D
    local = vol[:, None, None] * ref[None, :, :]
    return _symmetrize(_scatter(mesh.elements, local, mesh.n_nodes))


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    vol = element_volumes(mesh)
    if mesh.dim == 1:
        ref = np.array([[1.0, -1.0], [-1.0, 1.0]])
        local = (1.0 / vol)[:, None, None] * ref[None, :, :]
    else:
        G = _barycentric_gradients(mesh, vol)
        local = vol[:, None, None] * np.einsum("eik,ejk->eij", G, G)
    return _symmetrize(_scatter(mesh.elements, local, mesh.n_nodes))


def boundary_mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Gram matrix of ⟨·,·⟩_{L²(Γ)}; point evaluation at the ends in 1D."""
    facets = mesh.boundary_facets
    if mesh.dim == 1:
        local = np.ones((facets.shape[0], 1, 1))
    else:
        x = mesh.coords[facets]
        length = np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        local = length[:, None, None] * _MASS_1D[None, :, :]
    return _symmetrize(_scatter(facets, local, mesh.n_nodes))


def assemble(mesh: Mesh) -> Operators:
    """Assemble ``M_omega``, ``K`` and ``M_gamma`` for ``mesh``."""
    vol = element_volumes(mesh)
    if np.any(vol <= 0.0):
        raise MeshError(f"{int(np.sum(vol <= 0.0))} elements with non-positive volume")
    ops = Operators(
        mesh=mesh,
        M_omega=mass_matrix(mesh),
        K=stiffness_matrix(mesh),
        M_gamma=boundary_mass_matrix(mesh),
    )
    _LOGGER.debug(
        "assembled %d×%d operators (nnz M=%d, K=%d, M_gamma=%d)",
        mesh.n_nodes, mesh.n_nodes, ops.M_omega.nnz, ops.K.nnz, ops.M_gamma.nnz,
    )
    return ops
