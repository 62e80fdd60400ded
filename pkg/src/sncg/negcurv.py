"""Approximate smallest eigenvector of a Hessian operator.

The solver runs Lanczos on the shifted operator ``M = (I - H/L1)/2`` whose
spectrum lies in [0, 1] when ``|H|_2 <= L1``; the top eigenvector of ``M`` is
the bottom eigenvector of ``H``, and

    v'Hv - lambda_min(H) = 2 L1 (lambda_max(M) - v'Mv).

A power-type guarantee ``v'Mv >= (1 - d+)(1 - e~) lambda_max(M)`` therefore
gives ``lambda_min(H) >= v'Hv - 2 L1 (d+ + e~)``, and choosing
``d+ = e~ = eps / (4 L1)`` yields ``lambda_min(H) >= v'Hv - eps``. The factor
1/2 in ``M`` only rescales the spectrum; the relative guarantee is unchanged.

Lanczos is stopped once the Kuczynski-Wozniakowski bound certifies relative
accuracy ``eps / (2 L1)`` on ``lambda_max(M)`` with probability ``1 - delta``
for a uniformly random start, or earlier if the Krylov space becomes
invariant (then the answer is exact).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .oracle import ContractError

DEFAULT_BUDGET_CONSTANT = 8.0
_BREAKDOWN = 1e-12
_SPECTRUM_TOL = 1e-8


class BudgetExceededError(RuntimeError):
    """The iteration budget ran out before the accuracy certificate was met."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class SpectralBoundError(ContractError):
    """Observed Ritz values show ``|H|_2 > L1``."""


@dataclass
class SolverStats:
    iterations: int
    applications: int
    iso: int
    required: int
    budget: int


@dataclass
class CurvatureEstimate:
    v: np.ndarray
    rayleigh: float
    eps: float
    stats: SolverStats


def power_accuracy(eps: float, L1: float) -> float:
    """Common value of ``d+`` and ``e~`` that makes the translated slack equal ``eps``."""
    return eps / (4 * L1)


def curvature_slack(L1: float, delta_plus: float, eps_tilde: float) -> float:
    """Additive gap ``2 L1 (d+ + e~)`` between v'Hv and lambda_min(H)."""
    return 2 * L1 * (delta_plus + eps_tilde)


def shift_operator(H, L1: float):
    """Return ``v -> (v - H v / L1) / 2``, spectrum in [0, 1] for ``|H|_2 <= L1``.

    ``H = L1 I`` maps every vector to 0 (bottom of the range) and
    ``H = -L1 I`` maps it to itself (top of the range).
    """
    if not L1 > 0:
        raise ContractError("L1 must be positive")

    def apply(v):
        v = np.asarray(v, dtype=float)
        return 0.5 * (v - H.apply(v) / L1)

    return apply


def krylov_iterations(eps: float, L1: float, delta: float, d: int) -> int:
    """Lanczos steps after which relative error eps/(2 L1) fails w.p. <= delta.

    Uses P(fail) <= 1.648 sqrt(d) exp(-sqrt(rel) (2k - 1)) for a PSD matrix
    and a uniformly random start vector.
    """
    rel = min(eps, 2 * L1) / (2 * L1)
    k = (math.log(1.648 * math.sqrt(d) / delta) / math.sqrt(rel) + 1) / 2
    return max(1, math.ceil(k))


def iteration_budget(eps: float, L1: float, delta: float, d: int,
                     constant: float = DEFAULT_BUDGET_CONSTANT) -> int:
    """Hard cap ``ceil(C sqrt(L1/eps) log(d/delta))`` on Lanczos steps."""
    return max(1, math.ceil(constant * math.sqrt(L1 / eps) * math.log(d / delta)))


def min_eigvec(H, L1: float, eps: float, delta: float, rng,
               budget_constant: float = DEFAULT_BUDGET_CONSTANT) -> CurvatureEstimate:
    """Unit ``v`` with ``lambda_min(H) >= v'Hv - eps`` with probability ``1 - delta``.

    ``H`` is any operator exposing ``dim``, ``apply`` and ``batch_size`` (ISO
    cost per application). Tolerances above ``2 L1`` are clipped since every
    unit vector satisfies the contract there.

    Raises :class:`BudgetExceededError` (carrying the best estimate so far)
    when the certificate needs more steps than the budget allows.
    """
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps!r}")
    if not L1 > 0:
        raise ContractError(f"L1 must be positive, got {L1!r}")
    if not 0 < delta < 1:
        raise ContractError(f"delta must lie in (0, 1), got {delta!r}")
    d = H.dim
    per_apply = H.batch_size
    if d == 1:
        v = np.ones(1)
        r = float(H.apply(v)[0])
        return CurvatureEstimate(v, r, eps, SolverStats(1, 1, per_apply, 1, 1))

    eps_eff = min(eps, 2 * L1)
    required = min(krylov_iterations(eps_eff, L1, delta, d), d)
    budget = iteration_budget(eps_eff, L1, delta, d, budget_constant)

    Q = np.zeros((d, 0))
    HQ = np.zeros((d, 0))
    alphas, betas = [], []
    q = rng.standard_normal(d)
    q /= np.linalg.norm(q)
    best = None
    for k in range(1, budget + 1):
        hq = H.apply(q)
        Q = np.column_stack([Q, q])
        HQ = np.column_stack([HQ, hq])
        mq = 0.5 * (q - hq / L1)
        alpha = float(q @ mq)
        r = mq - alpha * q
        if betas:
            r -= betas[-1] * Q[:, -2]
        # full reorthogonalization, twice is enough
        r -= Q @ (Q.T @ r)
        r -= Q @ (Q.T @ r)
        beta = float(np.linalg.norm(r))
        alphas.append(alpha)

        T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        theta, Y = np.linalg.eigh(T)
        if theta[0] < -_SPECTRUM_TOL or theta[-1] > 1 + _SPECTRUM_TOL:
            raise SpectralBoundError(
                f"Ritz values of the shifted operator leave [0, 1] "
                f"({theta[0]:.3g}, {theta[-1]:.3g}): |H|_2 exceeds L1={L1}")
        y = Y[:, -1]
        v = Q @ y
        nv = np.linalg.norm(v)
        v /= nv
        Hv = HQ @ y / nv
        best = CurvatureEstimate(v, float(v @ Hv), eps,
                                 SolverStats(k, k, k * per_apply, required, budget))
        if k >= required or beta <= _BREAKDOWN:
            return best
        betas.append(beta)
        q = r / beta
    raise BudgetExceededError(
        f"Lanczos budget of {budget} steps exhausted before the {required} steps "
        f"needed for eps={eps}", best)
