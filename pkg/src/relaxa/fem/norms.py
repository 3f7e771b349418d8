"""Discrete norms of the phase spaces, built on assembled Operators.

Conventions:
    ‖u‖²        = uᵀ M_omega u
    ‖u‖₁²       = uᵀ K u + uᵀ M_gamma u
    ‖φ‖²_{ℋ_ε}  = ‖u‖₁² + ε‖v‖²                      φ = (u, v)
    ‖X‖²_{𝒳_ε}  = ‖u‖₁² + ‖γ‖²_Γ + ε‖v‖² + ε‖δ‖²_Γ    X = (u, γ, v, δ)
    ‖ζ‖²_Y      = ‖u‖² + ‖γ‖²_Γ                       ζ = (u, γ)
    ‖u‖₂²       = ‖u‖₁² + ‖Δ_h u‖²
    ‖(u, v)‖_𝒟  = ‖u‖₂ + ‖v‖₁

Δ_h u solves M_omega Δ_h u = −(K u + M_gamma(u + u_t)): the boundary
condition ∂ₙu = −u − u_t supplies the flux.
"""
from __future__ import annotations

import math
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from relaxa.fem.mesh import MeshError
from relaxa.schema.mesh import Operators
from relaxa.schema.state import ExtState, HypState


class NormSuite:
    def __init__(self, ops: Operators):
        self.ops = ops

    # -- helpers -----------------------------------------------------------

    def _field(self, u, name: str = "u") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.ops.n_nodes,):
            raise MeshError(f"{name} has shape {u.shape}, expected ({self.ops.n_nodes},)")
        return u

    def _trace(self, g, name: str = "gamma") -> np.ndarray:
        g = np.asarray(g, dtype=float)
        nb = self.ops.mesh.n_boundary
        if g.shape != (nb,):
            raise MeshError(f"{name} has shape {g.shape}, expected ({nb},)")
        return g

    @cached_property
    def _mass_lu(self):
        return spla.splu(self.ops.M_omega.tocsc())

    def solve_mass(self, rhs: np.ndarray) -> np.ndarray:
        return self._mass_lu.solve(np.asarray(rhs, dtype=float))

    # -- quadratic forms ---------------------------------------------------

    def l2_sq(self, u) -> float:
        u = self._field(u)
        return float(u @ (self.ops.M_omega @ u))

    def grad_sq(self, u) -> float:
        u = self._field(u)
        return float(u @ (self.ops.K @ u))

    def boundary_sq(self, u) -> float:
        """‖u‖²_{L²(Γ)} for a full nodal field."""
        u = self._field(u)
        return float(u @ (self.ops.M_gamma @ u))

    def trace_sq(self, g) -> float:
        """‖γ‖²_{L²(Γ)} for a boundary-node field."""
        g = self._trace(g)
        return float(g @ (self.ops.M_gamma_bb @ g))

    def h1_sq(self, u) -> float:
        u = self._field(u)
        return float(u @ (self.ops.robin @ u))

    def inner(self, u, v) -> float:
        return float(self._field(u) @ (self.ops.M_omega @ self._field(v, "v")))

    def hyp_sq(self, u, v, eps: float) -> float:
        return self.h1_sq(u) + eps * self.l2_sq(v)

    def state_sq(self, phi: HypState) -> float:
        return self.hyp_sq(phi.u, phi.v, phi.eps)

    def ext_sq(self, X: ExtState, eps: float) -> float:
        return (
            self.h1_sq(X.u)
            + self.trace_sq(X.gamma)
            + eps * self.l2_sq(X.v)
            + eps * self.trace_sq(X.delta)
        )

    def y_sq(self, u, gamma=None) -> float:
        u = self._field(u)
        if gamma is None:
            return self.l2_sq(u) + self.boundary_sq(u)
        return self.l2_sq(u) + self.trace_sq(gamma)

    # -- elliptic recovery -------------------------------------------------

    def laplacian(self, u, ut: Optional[np.ndarray] = None) -> np.ndarray:
        u = self._field(u)
        ub = u if ut is None else u + self._field(ut, "ut")
        rhs = -(self.ops.K @ u + self.ops.M_gamma @ ub)
        return self.solve_mass(rhs)

    def h2_sq(self, u, ut: Optional[np.ndarray] = None) -> float:
        return self.h1_sq(u) + self.l2_sq(self.laplacian(u, ut))

    def d_norm(self, u, ut) -> float:
        """‖(u, u_t)‖_{𝒟_ε}; carries no ε."""
        return math.sqrt(self.h2_sq(u, ut)) + math.sqrt(self.h1_sq(ut))

    def norm_H1(self, u) -> float:
        return math.sqrt(max(self.h1_sq(u), 0.0))


def norm_h1(ops: Operators, u) -> float:
    """sqrt(uᵀK u + uᵀM_gamma u)."""
    return NormSuite(ops).norm_H1(u)
