"""Nonlinearity model: f, its antiderivative F and the shifted map ψ(s) = f(s) + βs."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial

MAX_DEGREE = 3  # critical growth: |f''(s)| <= ℓ(1 + |s|)


class NonlinearityError(ValueError):
    pass


@dataclass(frozen=True)
class NonlinearitySpec:
    """A polynomial nonlinearity of degree at most three.

    ``coefficients`` are the coefficients of 1, s, s², s³ in f.  The
    double-well builtin is stored with ``kind="doublewell"`` and ``k`` so it
    round-trips through the config grammar as ``doublewell(k=...)``.
    """
    coefficients: tuple[float, ...]
    kind: str = "poly"
    k: Optional[float] = None
    beta: Optional[float] = None   # None = use ϑ

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients) or (0.0,)
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        if len(coeffs) - 1 > MAX_DEGREE:
            raise NonlinearityError(
                f"degree {len(coeffs) - 1} exceeds the critical growth degree {MAX_DEGREE}"
            )
        if not all(np.isfinite(coeffs)):
            raise NonlinearityError(f"non-finite coefficient in {coeffs!r}")
        object.__setattr__(self, "coefficients", coeffs)
        if self.beta is not None and self.beta < self.theta:
            raise NonlinearityError(
                f"beta={self.beta} is below the monotonicity defect theta={self.theta}; "
                "psi would not be monotone"
            )

    # -- polynomial pieces -------------------------------------------------

    @cached_property
    def f(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @cached_property
    def F(self) -> Polynomial:
        return self.f.integ(lbnd=0.0)

    @cached_property
    def fprime(self) -> Polynomial:
        return self.f.deriv()

    @cached_property
    def fsecond(self) -> Polynomial:
        return self.f.deriv(2)

    @cached_property
    def psi(self) -> Polynomial:
        return self.f + Polynomial([0.0, self.shift])

    @cached_property
    def Psi(self) -> Polynomial:
        return self.F + Polynomial([0.0, 0.0, 0.5 * self.shift])

    # -- structural constants ----------------------------------------------

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def f0(self) -> float:
        return self.coefficients[0]

    @cached_property
    def ell(self) -> float:
        """Smallest ℓ with |f''(s)| <= ℓ(1 + |s|) for the polynomial form."""
        c = self.coefficients + (0.0,) * (4 - len(self.coefficients))
        return max(2.0 * abs(c[2]), 6.0 * abs(c[3]))

    @cached_property
    def theta(self) -> float:
        """ϑ = max(0, −inf f'), infinite when f' is unbounded below."""
        c = self.coefficients + (0.0,) * (4 - len(self.coefficients))
        c1, c2, c3 = c[1], c[2], c[3]
        if c3 > 0.0:
            inf_fprime = c1 - c2 * c2 / (3.0 * c3)
        elif c3 == 0.0 and c2 == 0.0:
            inf_fprime = c1
        else:
            return float("inf")
        return max(0.0, -inf_fprime)

    @property
    def shift(self) -> float:
        """β actually used by ψ."""
        if self.beta is not None:
            return float(self.beta)
        return self.theta if np.isfinite(self.theta) else 0.0

    def with_beta(self, beta: float) -> "NonlinearitySpec":
        return NonlinearitySpec(self.coefficients, kind=self.kind, k=self.k, beta=beta)

    def __str__(self) -> str:
        if self.kind == "doublewell":
            return f"doublewell(k={self.k!r})"
        return "poly(" + ", ".join(repr(c) for c in self.coefficients) + ")"


@dataclass
class AssumptionReport:
    """Outcome of checking growth, sign and monotonicity on a sample grid."""
    lam: float
    mu: float
    c1: float
    c2: float
    ell: float
    theta: float
    growth_ok: bool
    sign_ok: bool
    monotone_ok: bool
    sign_s0: float
    sign_delta: float
    sample_range: tuple[float, float]
    n_samples: int
    psi_sup: float = 0.0            # sup |ψ'| on the sample range, the instrumented Q(R)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.growth_ok and self.sign_ok and self.monotone_ok
