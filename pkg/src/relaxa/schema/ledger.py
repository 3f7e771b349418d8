"""EnergyLedger: per-sample columns of every instrumented functional."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Columns every trajectory ledger carries; functionals observers add more
# (E_eps, V_eps, Psi_eps, W_eps, N_eps, ...).  Order is the CSV order.
BASE_COLUMNS = (
    "phi_sq",            # ‖φ‖²_{ℋ_ε}, or ‖ζ‖²_Y for parabolic runs
    "energy",            # E(t) or the parabolic Lyapunov functional
    "ut_sq",             # ‖u_t‖²
    "ut_gamma_sq",       # ‖u_t‖²_{L²(Γ)}
    "dissipation",       # running ∫(‖u_t‖² + ‖u_t‖²_{L²(Γ)}) dτ
)


@dataclass
class EnergyLedger:
    times: list[float] = field(default_factory=list)
    columns: dict[str, list[float]] = field(default_factory=dict)

    def record(self, t: float, **values: float) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"ledger times must increase strictly: {t} after {self.times[-1]}")
        n = len(self.times)
        for name, value in values.items():
            col = self.columns.setdefault(name, [float("nan")] * n)
            col.append(float(value))
        for name, col in self.columns.items():
            if len(col) == n:
                col.append(float("nan"))
        self.times.append(float(t))

    def __len__(self) -> int:
        return len(self.times)

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    @property
    def time_grid(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    @property
    def names(self) -> list[str]:
        base = [c for c in BASE_COLUMNS if c in self.columns]
        return base + sorted(c for c in self.columns if c not in BASE_COLUMNS)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(self.column(c))) for c in self.columns)
