"""The NCG-S update: gradient step or negative-curvature step, whichever
promises more decrease."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .config import SncgConfig
from .estimator import GradEstimate, build_hessian_operator, estimate_gradient
from .negcurv import CurvatureEstimate, min_eigvec
from .oracle import ContractError, ProblemOracle

CURVATURE = "curvature"
GRADIENT = "gradient"


class DecreaseBound(NamedTuple):
    delta1: float
    delta2: float
    best: float


def sufficient_decrease_bound(rayleigh, grad_norm, eps1, eps2, L1, L2) -> DecreaseBound:
    """Guaranteed decrease of the curvature step (delta1) and the gradient step (delta2)."""
    if min(eps1, eps2, L1, L2) <= 0:
        raise ContractError("eps1, eps2, L1, L2 must be positive")
    delta1 = -(eps2**2 / (2 * L2**2)) * rayleigh - 11 * eps2**3 / (48 * L2**2)
    delta2 = grad_norm**2 / (4 * L1) - eps1**2 / (8 * L1)
    return DecreaseBound(delta1, delta2, max(delta1, delta2))


@dataclass
class StepOutcome:
    x_next: np.ndarray
    branch: str
    rayleigh: float
    grad_norm: float
    delta1: float
    delta2: float
    eta: float
    eps_nc: float
    grad: GradEstimate
    curvature: CurvatureEstimate
    hess_batch_size: int
    ifo: int
    iso: int

    def predicate(self) -> bool:
        """Recompute the branch rule from the recorded bounds."""
        return self.delta1 > self.delta2


def ncgs_step(oracle: ProblemOracle, x, eps_nc: Union[float, Callable[[float], float]],
              delta_prime: float, eps1: float, eps2: float, config: SncgConfig, rng,
              grad: Optional[GradEstimate] = None) -> StepOutcome:
    """One NCG-S step from ``x``.

    ``eps_nc`` is the curvature-solver tolerance, or a callable mapping the
    current gradient-estimate norm to it (the gradient is always estimated
    first). A precomputed ``grad`` at ``x`` is reused instead of re-sampling.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (oracle.dim,):
        raise ContractError(f"x has shape {x.shape}, expected ({oracle.dim},)")
    if not (0 < eps1 < 1 and 0 < eps2 < 1):
        raise ContractError("eps1 and eps2 must lie in (0, 1)")
    c = config.constants
    eps4, eps3 = config.accuracies
    ifo0, iso0 = oracle.counter.snapshot()

    if grad is None:
        grad = estimate_gradient(oracle, x, eps4, delta_prime, rng, config.policy)
    tol = eps_nc(grad.norm) if callable(eps_nc) else float(eps_nc)
    if not tol > 0:
        raise ContractError(f"curvature tolerance must be positive, got {tol!r}")

    H = build_hessian_operator(oracle, x, eps3, delta_prime, rng, config.policy)
    curv = min_eigvec(H, c.L1, tol, delta_prime, rng, config.budget_constant)

    bound = sufficient_decrease_bound(curv.rayleigh, grad.norm, eps1, eps2, c.L1, c.L2)
    if bound.delta1 > bound.delta2:
        sign = 1.0 if curv.v @ grad.g >= 0 else -1.0
        eta = eps2 / c.L2 * sign
        x_next = x - eta * curv.v
        branch = CURVATURE
    else:
        eta = 0.0
        x_next = x - grad.g / c.L1
        branch = GRADIENT
    ifo1, iso1 = oracle.counter.snapshot()
    return StepOutcome(
        x_next=x_next, branch=branch, rayleigh=curv.rayleigh, grad_norm=grad.norm,
        delta1=bound.delta1, delta2=bound.delta2, eta=eta, eps_nc=tol, grad=grad,
        curvature=curv, hess_batch_size=H.batch_size, ifo=ifo1 - ifo0, iso=iso1 - iso0,
    )
