"""Result models produced by the analysis stage."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from relaxa.schema.state import Cloud

# Certification statuses, ordered from strongest to weakest claim.
VERIFIED = "verified"
VERIFIED_FITTED = "verified-with-fitted-constants"
HYPOTHESIS_FAILED = "hypothesis-failed"
VIOLATED = "violated"
STATUSES = (VERIFIED, VERIFIED_FITTED, HYPOTHESIS_FAILED, VIOLATED)


# ---------------------------------------------------------------------------
# Grönwall and envelope checks
# ---------------------------------------------------------------------------

@dataclass
class GronwallInstance:
    """Sampled data of Λ' + 2ηΛ <= hΛ + k with ∫ₛᵗ h <= η(t − s) + m."""
    times: np.ndarray
    Lam: np.ndarray
    h: np.ndarray
    eta: float
    k: float = 0.0
    m: float = 0.0
    name: str = "gronwall"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.Lam = np.asarray(self.Lam, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        if not (self.times.shape == self.Lam.shape == self.h.shape):
            raise ValueError("times, Lam and h must share one grid")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0.0):
            raise ValueError("time grid must increase strictly")
        if np.any(self.Lam < 0.0):
            raise ValueError("Lam must be nonnegative")
        if not self.eta > 0.0 or self.k < 0.0 or self.m < 0.0:
            raise ValueError(f"need eta > 0, k >= 0, m >= 0 (got {self.eta}, {self.k}, {self.m})")


@dataclass
class GronwallReport:
    name: str
    hypothesis_ok: bool
    hypothesis_excess: float         # max over pairs of ∫ₛᵗh − η(t − s) − m
    conclusion_ok: Optional[bool]    # None when the hypothesis fails
    max_violation_ratio: float       # max Λ / bound, nan when not asserted
    bound: Optional[np.ndarray] = None

    @property
    def status(self) -> str:
        if not self.hypothesis_ok:
            return HYPOTHESIS_FAILED
        return VERIFIED if self.conclusion_ok else VIOLATED


@dataclass
class EnvelopeFit:
    """Q̂ e^{−ω̂t} + P̂ fitted as an upper envelope of a sampled curve."""
    Q: float
    omega: float
    P: float
    residual: float
    passed: bool
    form: str = "decay_plus_floor"
    max_ratio: float = 0.0           # max curve / envelope
    notes: list[str] = field(default_factory=list)

    def envelope(self, times: np.ndarray) -> np.ndarray:
        return self.Q * np.exp(-self.omega * np.asarray(times, dtype=float)) + self.P


@dataclass
class CertEntry:
    estimate: str
    status: str
    detail: dict[str, float] = field(default_factory=dict)
    message: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")


@dataclass
class CertificationReport:
    entries: list[CertEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def add(self, entry: CertEntry) -> None:
        self.entries.append(entry)

    def count(self, status: str) -> int:
        return sum(1 for e in self.entries if e.status == status)

    @property
    def any_violated(self) -> bool:
        return self.count(VIOLATED) > 0


# ---------------------------------------------------------------------------
# Decompositions
# ---------------------------------------------------------------------------

@dataclass
class SplitTrajectory:
    """Synchronized u = v + w samples of the Z/K splitting."""
    eps: float
    beta: float
    times: np.ndarray
    U: np.ndarray
    Ut: np.ndarray
    V: np.ndarray
    Vt: np.ndarray
    W: np.ndarray
    Wt: np.ndarray
    defect: np.ndarray               # ‖u − (v + w)‖₁ per sample
    z_norm: np.ndarray               # ‖(v, v_t)‖_{ℋ_ε}
    k_norm: np.ndarray               # ‖(w, w_t)‖_{𝒟_ε}, discrete
    v_mode: str = "direct"
    cross_check: Optional[np.ndarray] = None   # ‖u_t − (v_t + w_t)‖ per sample
    H: Optional[np.ndarray] = None             # h = w_t from the differentiated system
    Ht: Optional[np.ndarray] = None

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]


@dataclass
class DifferenceSplit:
    """ū (linear, contracting) and v̄ (forced, smoother) parts of φ − θ."""
    eps: float
    times: np.ndarray
    Ubar: np.ndarray
    Ubar_t: np.ndarray
    Vbar: np.ndarray
    Vbar_t: np.ndarray
    initial_distance: float          # ‖φ₀ − θ₀‖_{ℋ_ε}
    alpha_curve: np.ndarray          # ‖ū(t)‖_{ℋ_ε} / ‖φ₀ − θ₀‖_{ℋ_ε}
    lambda_curve: np.ndarray         # ‖v̄(t)‖_{𝒟_ε} / ‖φ₀ − θ₀‖_{ℋ_ε}
    n_eps: np.ndarray                # 𝒩_ε(ū) per sample
    reconstruction_defect: float
    t_star: Optional[float] = None
    alpha_hat: float = float("nan")
    Lambda_hat: float = float("nan")
    lam: float = float("nan")
    n_eps_rise: Optional[np.ndarray] = None   # largest step increase of 𝒩_ε(ū) since the last sample, over 𝒩_ε(ū₀)
    n_gaps: Optional[np.ndarray] = None       # (lower, upper) relative gaps of the 𝒩_ε equivalence per sample

    @property
    def found(self) -> bool:
        return self.t_star is not None

    @property
    def n_eps_max_rise(self) -> float:
        return float(np.max(self.n_eps_rise)) if self.n_eps_rise is not None else 0.0


@dataclass
class DependenceResult:
    """Outcome of a two-trajectory continuous dependence experiment."""
    times: np.ndarray
    diff_sq: np.ndarray              # ‖φ_a(t) − φ_b(t)‖²_{ℋ_ε}
    boundary_integral: np.ndarray    # ∫₀ᵗ ‖(u_a − u_b)_t‖²_{L²(Γ)}
    nu_hat: Optional[float]          # None when the initial difference vanishes
    lipschitz_bound: float           # instrumented Q(R) = (sup|f'|)² / λ
    message: str = ""


@dataclass
class AbsorbingReport:
    P0: float
    entry_times: list[float]
    levels: list[float]
    absorbed: bool
    fit: Optional[EnvelopeFit] = None
    message: str = ""


@dataclass
class SweepRow:
    eps: float
    distance: float
    n_points_a: int
    n_points_b: int
    t_sample: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    monotone: bool
    message: str = ""
    dt: float = float("nan")
    clouds: dict[float, Cloud] = field(default_factory=dict)
