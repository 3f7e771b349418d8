"""Proof parameters (α, η, β, ε, λ, μ) with their admissibility windows."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


class ParamsError(ValueError):
    pass


# Upper bounds on α for each functional.
#   E   absorbing-set functional E_ε:       0 < α < min{2, 2/η, 2μ}, η > λ/(4μ)
#   V   Z-decay functional V_ε:             0 < α < min{2, λ}
#   Psi compactness functional Ψ_ε:         0 < α < min{2 − η, 1, 2/η}, 1/4 < η < 2
#   W/N carry no α window.
WINDOWS = ("E", "V", "Psi", "W", "N")


def alpha_bound(window: str, lam: float, mu: float, eta: float) -> float:
    if window == "E":
        return min(2.0, 2.0 / eta, 2.0 * mu)
    if window == "V":
        return min(2.0, lam)
    if window == "Psi":
        return min(2.0 - eta, 1.0, 2.0 / eta)
    if window in ("W", "N"):
        return float("inf")
    raise ParamsError(f"unknown window {window!r}; expected one of {WINDOWS}")


def default_eta(window: str, lam: float, mu: float) -> float:
    eta = max(lam / (4.0 * mu), 0.25) + 0.01
    if window == "Psi":
        eta = min(max(eta, 0.26), 1.99)
    return eta


@dataclass(frozen=True)
class FunctionalParams:
    alpha: float
    eta: float
    beta: float
    eps: float
    lam: float
    mu: float
    window: str = "E"

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ParamsError(f"lambda must be positive, got {self.lam}")
        if not 0.0 < self.mu <= self.lam:
            raise ParamsError(f"mu must lie in (0, lambda={self.lam}], got {self.mu}")
        if not 0.0 <= self.eps <= 1.0:
            raise ParamsError(f"eps must lie in [0, 1], got {self.eps}")
        if not self.eta > 0.0:
            raise ParamsError(f"eta must be positive, got {self.eta}")
        if self.window == "E" and not self.eta > self.lam / (4.0 * self.mu):
            raise ParamsError(
                f"eta={self.eta} must exceed lambda/(4 mu)={self.lam / (4.0 * self.mu)}"
            )
        if self.window == "Psi" and not 0.25 < self.eta < 2.0:
            raise ParamsError(f"eta={self.eta} must lie in (1/4, 2) for Psi_eps")
        bound = alpha_bound(self.window, self.lam, self.mu, self.eta)
        if not 0.0 < self.alpha < bound:
            raise ParamsError(
                f"alpha={self.alpha} outside the {self.window} window (0, {bound})"
            )

    @classmethod
    def defaults(
        cls,
        lam: float,
        eps: float,
        beta: float,
        window: str = "E",
        alpha: Optional[float] = None,
        eta: Optional[float] = None,
        mu: Optional[float] = None,
    ) -> "FunctionalParams":
        """μ = λ/2, η just above its lower bound, α at 90% of its window."""
        mu = lam / 2.0 if mu is None else mu
        eta = default_eta(window, lam, mu) if eta is None else eta
        if alpha is None:
            bound = alpha_bound(window, lam, mu, eta)
            alpha = 0.9 * bound if bound != float("inf") else 1.0
        return cls(alpha=alpha, eta=eta, beta=beta, eps=eps, lam=lam, mu=mu, window=window)

    def for_window(self, window: str) -> "FunctionalParams":
        """Same λ, μ, β, ε with α and η re-defaulted for another functional."""
        return FunctionalParams.defaults(self.lam, self.eps, self.beta, window=window, mu=self.mu)
