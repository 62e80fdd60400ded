"""Stochastic objective abstraction with IFO/ISO accounting.

A problem exposes per-sample gradients (IFO) and Hessian-vector products
(ISO) of random component functions f(x; xi), plus exact population
quantities that are used only for verification and never touch the counters.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DENSE_CAP = 2000

# Floor for noise scales of noiseless problems; keeps G strictly positive
# while making the gradient batch formula collapse to a single sample.
MIN_NOISE_SCALE = 1e-12


class ContractError(ValueError):
    """Raised when an operation is called outside its documented preconditions."""


class DenseCapError(ContractError):
    """Raised when dense verification is requested above the dimension cap."""


@dataclass(frozen=True)
class ProblemConstants:
    """Assumption constants for a problem.

    ``L1`` bounds every per-sample Hessian in spectral norm, ``L2`` is the
    Lipschitz constant of the full Hessian, ``G`` the sub-exponential scale of
    the gradient noise and ``Delta`` an upper bound on f(x0) - f(x*).
    """

    L1: float
    L2: float
    G: float
    Delta: float
    G_source: str = "analytic"

    def __post_init__(self):
        for name in ("L1", "L2", "G", "Delta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ContractError(f"constant {name} must be positive and finite, got {value!r}")

    def to_dict(self) -> dict:
        return {"L1": self.L1, "L2": self.L2, "G": self.G, "Delta": self.Delta,
                "G_source": self.G_source}


@dataclass(frozen=True)
class Population:
    """Random index space: a finite population of ``size`` samples, or a stream."""

    size: Optional[int] = None

    @property
    def finite(self) -> bool:
        return self.size is not None


@dataclass(frozen=True, eq=False)
class IndexBatch:
    """A mini-batch of random indices.

    For finite populations the batch is stored as multiplicities ``counts``
    over the population (the histogram of i.i.d. draws carries everything a
    batch average needs). For stream populations the batch is a generator
    seed; element ``i`` is the ``i``-th draw of that generator.
    """

    size: int
    counts: Optional[np.ndarray] = None
    seed: Optional[int] = None

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.size

    def indices(self) -> np.ndarray:
        """Expanded sample indices (finite populations, sorted) or stream states."""
        if self.counts is not None:
            return np.repeat(np.arange(self.counts.size), self.counts)
        return np.array([(self.seed, i) for i in range(self.size)], dtype=np.int64)


class OracleCounter:
    """Thread-safe IFO/ISO tally."""

    def __init__(self):
        self._lock = threading.Lock()
        self.ifo = 0
        self.iso = 0

    def add(self, ifo: int = 0, iso: int = 0) -> None:
        with self._lock:
            self.ifo += ifo
            self.iso += iso

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.ifo, self.iso

    def reset(self) -> None:
        with self._lock:
            self.ifo = 0
            self.iso = 0


@dataclass(frozen=True)
class ExactEval:
    value: float
    grad: np.ndarray
    hessian: np.ndarray

    def __iter__(self):
        return iter((self.value, self.grad, self.hessian))


class ProblemOracle:
    """Base class for stochastic problems.

    Subclasses implement the per-sample quantities ``_sample_value``,
    ``_sample_grad``, ``_sample_hvp`` and ``_sample_hessian``, the weighted
    population means ``_mean_grad`` / ``_mean_hvp`` (weights sum to one), and
    the exact objective ``_value`` / ``_grad`` / ``_hessian``. Stream problems
    override the ``_stream_*`` hooks instead of the weighted means.
    """

    name = "problem"

    def __init__(self, dim: int, population: Population, constants: ProblemConstants,
                 x0: np.ndarray, dense_cap: int = DENSE_CAP):
        if dim < 1:
            raise ContractError("dim must be a positive integer")
        self.dim = int(dim)
        self.population = population
        self.constants = constants
        self.x0 = np.asarray(x0, dtype=float).copy()
        self.dense_cap = dense_cap
        self.counter = OracleCounter()
        self._check(self.x0)

    # ------------------------------------------------------------------ helpers
    def _check(self, x, what="x"):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ContractError(f"{what} has shape {x.shape}, expected ({self.dim},)")
        return x

    def _check_index(self, xi):
        if self.population.finite:
            k = int(xi)
            if not 0 <= k < self.population.size:
                raise ContractError(f"sample index {k} outside population of size {self.population.size}")
            return k
        seed, pos = (int(t) for t in xi)
        return seed, pos

    def in_domain(self, x) -> bool:
        """Whether ``x`` lies in the region on which the constants are valid."""
        return True

    # ------------------------------------------------------------- counted API
    def sample_grad(self, x, xi) -> np.ndarray:
        """Gradient of one component function; one IFO call."""
        x = self._check(x)
        xi = self._check_index(xi)
        self.counter.add(ifo=1)
        return self._sample_grad(x, xi)

    def sample_hvp(self, x, xi, v) -> np.ndarray:
        """Hessian-vector product of one component function; one ISO call."""
        x = self._check(x)
        v = self._check(v, "v")
        xi = self._check_index(xi)
        self.counter.add(iso=1)
        return self._sample_hvp(x, xi, v)

    def batch_grad(self, x, batch: IndexBatch) -> np.ndarray:
        """Average gradient over ``batch``; ``batch.size`` IFO calls."""
        x = self._check(x)
        self.counter.add(ifo=batch.size)
        if batch.counts is not None:
            return self._mean_grad(x, batch.weights)
        return self._stream_mean_grad(x, batch)

    def batch_hvp(self, x, batch: IndexBatch, v) -> np.ndarray:
        """Average Hessian-vector product over ``batch``; ``batch.size`` ISO calls."""
        x = self._check(x)
        v = self._check(v, "v")
        self.counter.add(iso=batch.size)
        if batch.counts is not None:
            return self._mean_hvp(x, batch.weights, v)
        return self._stream_mean_hvp(x, batch, v)

    # ------------------------------------------------------ verification only
    def _dense_guard(self):
        if self.dim > self.dense_cap:
            raise DenseCapError(f"dense verification refused: d={self.dim} exceeds cap {self.dense_cap}")

    def exact_eval(self, x) -> ExactEval:
        """Exact value, full gradient and dense full Hessian (no oracle counts)."""
        self._dense_guard()
        x = self._check(x)
        return ExactEval(float(self._value(x)), self._grad(x), self._hessian(x))

    def value(self, x) -> float:
        return float(self._value(self._check(x)))

    def sample_value(self, x, xi) -> float:
        return float(self._sample_value(self._check(x), self._check_index(xi)))

    def sample_hessian(self, x, xi) -> np.ndarray:
        """Dense per-sample Hessian (no oracle counts)."""
        self._dense_guard()
        return self._sample_hessian(self._check(x), self._check_index(xi))

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim,
                "population": self.population.size,
                "constants": self.constants.to_dict()}

    # ----------------------------------------------------------- subclass hooks
    def _mean_grad(self, x, weights):
        raise NotImplementedError

    def _mean_hvp(self, x, weights, v):
        raise NotImplementedError

    def _stream_mean_grad(self, x, batch):
        raise NotImplementedError

    def _stream_mean_hvp(self, x, batch, v):
        raise NotImplementedError


def sample_indices(oracle: ProblemOracle, count: int, rng: np.random.Generator,
                   replace: bool = True) -> IndexBatch:
    """Draw ``count`` i.i.d. uniform indices from the oracle's population.

    Finite populations are sampled with replacement by default; the draw is
    realized through its multinomial histogram so that very large batches
    cost O(population) rather than O(count). ``replace=False`` draws distinct
    indices and requires ``count <= population``.
    """
    count = int(count)
    if count < 1:
        raise ContractError("count must be >= 1")
    pop = oracle.population
    if pop.finite:
        n = pop.size
        if replace:
            counts = rng.multinomial(count, np.full(n, 1.0 / n))
        else:
            if count > n:
                raise ContractError(f"cannot draw {count} distinct indices from {n}")
            counts = np.zeros(n, dtype=np.int64)
            counts[rng.choice(n, size=count, replace=False)] = 1
        return IndexBatch(size=count, counts=counts.astype(np.int64))
    return IndexBatch(size=count, seed=int(rng.integers(0, 2**63 - 1)))


def full_batch(oracle: ProblemOracle) -> IndexBatch:
    """Every sample of a finite population exactly once."""
    if not oracle.population.finite:
        raise ContractError("full batch requires a finite population")
    n = oracle.population.size
    return IndexBatch(size=n, counts=np.ones(n, dtype=np.int64))


def explicit_batch(oracle: ProblemOracle, indices) -> IndexBatch:
    """Batch made of the given finite-population indices (repeats allowed)."""
    if not oracle.population.finite:
        raise ContractError("explicit batches require a finite population")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size < 1:
        raise ContractError("empty batch")
    counts = np.bincount(idx, minlength=oracle.population.size)
    if counts.size != oracle.population.size:
        raise ContractError("index outside population")
    return IndexBatch(size=int(idx.size), counts=counts)


def sample_grad(oracle: ProblemOracle, x, xi) -> np.ndarray:
    return oracle.sample_grad(x, xi)


def sample_hvp(oracle: ProblemOracle, x, xi, v) -> np.ndarray:
    return oracle.sample_hvp(x, xi, v)


def exact_eval(oracle: ProblemOracle, x) -> ExactEval:
    return oracle.exact_eval(x)
