"""Run configuration shared by the NCG-S step and the drivers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .estimator import BatchPolicy, theoretical_accuracies
from .negcurv import DEFAULT_BUDGET_CONSTANT
from .oracle import ContractError, ProblemConstants


@dataclass(frozen=True)
class SncgConfig:
    """Targets, failure budget and problem constants for one run.

    ``eps2 = eps1 ** alpha``; the per-step failure probability is
    ``delta' = delta / (1 + max(48 L2^2 / eps2^3, 8 L1 / eps1^2) Delta)``.
    """

    eps1: float
    constants: ProblemConstants
    alpha: float = 0.5
    delta: float = 0.1
    policy: BatchPolicy = field(default_factory=BatchPolicy)
    max_iters_override: Optional[int] = None
    budget_constant: float = DEFAULT_BUDGET_CONSTANT
    verification: bool = True

    def __post_init__(self):
        if not 0 < self.eps1 < 1:
            raise ContractError(f"eps1 must lie in (0, 1), got {self.eps1!r}")
        if not 0 < self.alpha <= 1:
            raise ContractError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not 0 < self.delta < 1:
            raise ContractError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.max_iters_override is not None and self.max_iters_override < 1:
            raise ContractError("max_iters_override must be >= 1")

    @property
    def eps2(self) -> float:
        return self.eps1**self.alpha

    @property
    def rate(self) -> float:
        """max(48 L2^2 / eps2^3, 8 L1 / eps1^2): inverse of the guaranteed per-step decrease."""
        c = self.constants
        return max(48 * c.L2**2 / self.eps2**3, 8 * c.L1 / self.eps1**2)

    @property
    def delta_prime(self) -> float:
        return self.delta / (1 + self.rate * self.constants.Delta)

    @property
    def accuracies(self) -> tuple[float, float]:
        """(eps4, eps3) fed to the batch-size formulas."""
        return theoretical_accuracies(self.eps1, self.eps2, self.constants.L2)

    @property
    def sncg1_cap(self) -> int:
        """Iteration bound 1 + max(...) Delta for SNCG-1."""
        return math.ceil(1 + self.rate * self.constants.Delta)

    @property
    def sg_cap(self) -> int:
        """Bound 8 L1 Delta / eps1^2 on SG steps of SNCG-2."""
        c = self.constants
        return math.ceil(8 * c.L1 * c.Delta / self.eps1**2)

    @property
    def ncgs_cap(self) -> int:
        """Bound (1 + 48 L2^2 / eps2^3) Delta on NCG-S steps of SNCG-2."""
        c = self.constants
        return math.ceil((1 + 48 * c.L2**2 / self.eps2**3) * c.Delta)

    def to_dict(self) -> dict:
        return {
            "eps1": self.eps1, "alpha": self.alpha, "eps2": self.eps2, "delta": self.delta,
            "delta_prime": self.delta_prime, "constants": self.constants.to_dict(),
            "policy": self.policy.to_dict(), "max_iters_override": self.max_iters_override,
            "budget_constant": self.budget_constant, "verification": self.verification,
        }
