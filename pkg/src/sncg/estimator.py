"""Mini-batch gradient estimates and averaged Hessian operators.

Batch sizes follow the concentration bounds

    |S1| >= 4 G^2 (1 + 3 log^2(1/delta)) / eps4^2
    |S2| >= 16 L1^2 log(2d/delta) / eps3^2

with ``log`` taken as :data:`LOG` (natural logarithm).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .oracle import ContractError, IndexBatch, ProblemOracle, full_batch, sample_indices

LOG = math.log

# Relative distance to an integer below which a batch size is treated as exact
# before taking the ceiling (guards against round-off such as 16.00000000003).
_CEIL_SNAP = 1e-9


def _ceil(value: float) -> int:
    nearest = round(value)
    if nearest >= 1 and abs(value - nearest) <= _CEIL_SNAP * value:
        return int(nearest)
    return max(1, math.ceil(value))


def _open_unit(name, value):
    if not 0 < value < 1:
        raise ContractError(f"{name} must lie in (0, 1), got {value!r}")


def grad_batch_size_raw(G: float, eps4: float, delta: float) -> float:
    if not G > 0:
        raise ContractError(f"G must be positive, got {G!r}")
    _open_unit("eps4", eps4)
    _open_unit("delta", delta)
    return 4 * G**2 * (1 + 3 * LOG(1 / delta) ** 2) / eps4**2


def grad_batch_size(G: float, eps4: float, delta: float) -> int:
    """Smallest |S1| for which ``|g - grad f| <= eps4`` with probability 1 - delta."""
    return _ceil(grad_batch_size_raw(G, eps4, delta))


def hess_batch_size_raw(L1: float, eps3: float, delta: float, d: int) -> float:
    if not L1 > 0:
        raise ContractError(f"L1 must be positive, got {L1!r}")
    _open_unit("eps3", eps3)
    _open_unit("delta", delta)
    if int(d) < 1:
        raise ContractError(f"d must be >= 1, got {d!r}")
    return 16 * L1**2 / eps3**2 * LOG(2 * d / delta)


def hess_batch_size(L1: float, eps3: float, delta: float, d: int) -> int:
    """Smallest |S2| for which ``|H - hess f|_2 <= eps3`` with probability 1 - delta."""
    return _ceil(hess_batch_size_raw(L1, eps3, delta, d))


def theoretical_accuracies(eps1: float, eps2: float, L2: float) -> tuple[float, float]:
    """Largest (eps4, eps3) for which the per-step decrease bound holds."""
    eps4 = min(eps1 / (2 * math.sqrt(2)), eps2**2 / (24 * L2))
    eps3 = eps2 / 24
    return eps4, eps3


@dataclass(frozen=True)
class BatchPolicy:
    """How batch sizes are chosen.

    ``theoretical`` uses the concentration formulas verbatim, ``practical``
    clips them at ``grad_cap`` / ``hess_cap``, and ``full`` averages over the
    whole finite population (zero estimation error). ``replace=False`` samples
    without replacement (finite populations only).
    """

    mode: str = "theoretical"
    grad_cap: Optional[int] = None
    hess_cap: Optional[int] = None
    replace: bool = True

    def __post_init__(self):
        if self.mode not in ("theoretical", "practical", "full"):
            raise ContractError(f"unknown batch mode {self.mode!r}")
        if self.mode == "practical" and (self.grad_cap is None or self.hess_cap is None):
            raise ContractError("practical mode needs grad_cap and hess_cap")
        for cap in (self.grad_cap, self.hess_cap):
            if cap is not None and int(cap) < 1:
                raise ContractError("batch caps must be >= 1")

    def grad_size(self, G, eps4, delta) -> int:
        size = grad_batch_size(G, eps4, delta)
        return min(size, int(self.grad_cap)) if self.mode == "practical" else size

    def hess_size(self, L1, eps3, delta, d) -> int:
        size = hess_batch_size(L1, eps3, delta, d)
        return min(size, int(self.hess_cap)) if self.mode == "practical" else size

    def draw(self, oracle: ProblemOracle, size: int, rng) -> IndexBatch:
        if self.mode == "full":
            return full_batch(oracle)
        return sample_indices(oracle, size, rng, replace=self.replace)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "grad_cap": self.grad_cap, "hess_cap": self.hess_cap,
                "replace": self.replace}


@dataclass
class GradEstimate:
    g: np.ndarray
    batch_size: int
    eps4: float
    norm: float = field(init=False)

    def __post_init__(self):
        self.norm = float(np.linalg.norm(self.g))


class HessianOperator:
    """v -> (1/|S2|) sum_{xi in S2} hess f(x; xi) v over a fixed batch.

    Nothing is cached: every :meth:`apply` re-touches the batch and costs
    ``batch_size`` ISO calls.
    """

    def __init__(self, oracle: ProblemOracle, x, batch: IndexBatch, eps3: float):
        self.oracle = oracle
        self.x = np.asarray(x, dtype=float).copy()
        self.batch = batch
        self.eps3 = eps3
        self.applications = 0

    @property
    def dim(self) -> int:
        return self.oracle.dim

    @property
    def batch_size(self) -> int:
        return self.batch.size

    def apply(self, v) -> np.ndarray:
        self.applications += 1
        return self.oracle.batch_hvp(self.x, self.batch, v)

    __call__ = apply

    def __matmul__(self, v):
        return self.apply(v)

    def materialize(self) -> np.ndarray:
        """Dense matrix of the operator (d applications)."""
        eye = np.eye(self.dim)
        return np.column_stack([self.apply(eye[:, i]) for i in range(self.dim)])


class MatrixOperator:
    """Dense symmetric matrix behind the operator interface (one 'sample')."""

    def __init__(self, H):
        self.H = np.asarray(H, dtype=float)
        self.applications = 0
        self.batch_size = 1

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def apply(self, v) -> np.ndarray:
        self.applications += 1
        return self.H @ v

    __call__ = apply

    def __matmul__(self, v):
        return self.apply(v)

    def materialize(self) -> np.ndarray:
        return self.H.copy()


def estimate_gradient(oracle: ProblemOracle, x, eps4: float, delta: float, rng,
                      policy: BatchPolicy = BatchPolicy(), batch: Optional[IndexBatch] = None
                      ) -> GradEstimate:
    """Average of per-sample gradients over a batch sized for accuracy ``eps4``.

    An explicit ``batch`` bypasses sizing and sampling.
    """
    if batch is None:
        size = policy.grad_size(oracle.constants.G, eps4, delta)
        batch = policy.draw(oracle, size, rng)
    g = oracle.batch_grad(x, batch)
    return GradEstimate(g=g, batch_size=batch.size, eps4=eps4)


def build_hessian_operator(oracle: ProblemOracle, x, eps3: float, delta: float, rng,
                           policy: BatchPolicy = BatchPolicy(),
                           batch: Optional[IndexBatch] = None) -> HessianOperator:
    """Averaged stochastic Hessian at ``x`` over a batch sized for accuracy ``eps3``."""
    if batch is None:
        size = policy.hess_size(oracle.constants.L1, eps3, delta, oracle.dim)
        batch = policy.draw(oracle, size, rng)
    return HessianOperator(oracle, x, batch, eps3)
