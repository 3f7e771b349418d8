"""State models: hyperbolic (u, u_t), parabolic (u, γ), extended (u, γ, v, δ)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from relaxa.schema.ledger import EnergyLedger


@dataclass
class HypState:
    """φ = (u, u_t) in the discrete ℋ_ε = H¹(Ω) × L²(Ω)."""
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0
    eps: float = 1.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape:
            raise ValueError(f"u{self.u.shape} and v{self.v.shape} differ in shape")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive for the hyperbolic problem, got {self.eps}")

    def copy(self) -> "HypState":
        return HypState(self.u.copy(), self.v.copy(), self.t, self.eps)


@dataclass
class ParState:
    """ζ = (u, γ) in Y = L²(Ω) × L²(Γ).

    For t > 0 the trace γ is the boundary restriction of u.  ``gamma0`` only
    carries mismatched boundary data at t = 0.
    """
    u: np.ndarray
    t: float = 0.0
    gamma0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.gamma0 is not None:
            self.gamma0 = np.asarray(self.gamma0, dtype=float)

    def gamma(self, boundary_nodes: np.ndarray) -> np.ndarray:
        if self.gamma0 is not None and self.t == 0.0:
            return self.gamma0
        return self.u[boundary_nodes]

    def copy(self) -> "ParState":
        g0 = None if self.gamma0 is None else self.gamma0.copy()
        return ParState(self.u.copy(), self.t, g0)


@dataclass
class ExtState:
    """(u, γ, v, δ) in 𝒳_ε; γ and δ are boundary-node fields."""
    u: np.ndarray
    gamma: np.ndarray
    v: np.ndarray
    delta: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u, self.gamma, self.v, self.delta])


@dataclass
class StepReport:
    """Bookkeeping for one accepted time step.

    ``energy`` is E(tⁿ⁺¹) = ‖φ‖²_{ℋ_ε} + 2∫F(u) for the hyperbolic problem and
    the Lyapunov functional ½‖u‖₁² + ∫F(u) for the parabolic one;
    ``diss_increment`` is what the scheme removed over the step, so
    energy_before = energy + diss_increment up to ``defect``.
    """
    t: float
    dt: float
    energy: float
    diss_increment: float
    residual: float
    newton_iters: int
    defect: float = 0.0


@dataclass
class TrajectoryRecord:
    """Sampled states of one solve plus its ledger and per-step reports."""
    problem: str                 # "hyperbolic" | "parabolic"
    eps: float
    times: np.ndarray
    U: np.ndarray                # (n_samples, n_nodes)
    V: np.ndarray                # velocities at the same samples
    ledger: EnergyLedger
    steps: list[StepReport] = field(default_factory=list)
    gamma0: Optional[np.ndarray] = None
    initial_energy: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]

    def state(self, i: int) -> HypState | ParState:
        if self.problem == "hyperbolic":
            return HypState(self.U[i], self.V[i], float(self.times[i]), self.eps)
        g0 = self.gamma0 if i == 0 else None
        return ParState(self.U[i], float(self.times[i]), g0)

    @property
    def final(self) -> HypState | ParState:
        return self.state(self.n_samples - 1)

    def energy_balance_defect(self) -> float:
        """|E(T) + Σ dissipation − E(0)|, the cumulative discrete balance."""
        if not self.steps:
            return 0.0
        total = sum(s.diss_increment for s in self.steps)
        return abs(self.steps[-1].energy + total - self.initial_energy)


@dataclass
class Cloud:
    """Finite sample of extended states approximating an attractor."""
    points: list[ExtState]
    eps: float                   # 0.0 for the parabolic cloud
    times: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.points:
            raise ValueError("a cloud needs at least one point")
        n = self.points[0].u.shape
        if any(p.u.shape != n for p in self.points):
            raise ValueError("cloud points live on different meshes")

    def __len__(self) -> int:
        return len(self.points)

    def matrix(self) -> np.ndarray:
        return np.vstack([p.flat() for p in self.points])
