"""SNCG-1, SNCG-2 and a plain mini-batch SGD baseline."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .config import SncgConfig
from .estimator import estimate_gradient
from .ncgs import ncgs_step
from .negcurv import BudgetExceededError, SpectralBoundError
from .oracle import ContractError, ProblemOracle

CONVERGED = "Converged"
ITER_CAP = "IterCapReached"
SOLVER_FAILURE = "SolverFailure"

SG = "sg"


@dataclass
class IterationRecord:
    iter: int
    branch: str
    grad_norm: float
    rayleigh: Optional[float]
    eps_nc: Optional[float]
    f: Optional[float]
    ifo: int
    iso: int
    ifo_step: int
    iso_step: int
    grad_batch: int
    hess_batch: Optional[int]
    applications: Optional[int]
    in_domain: bool
    wall_time: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    x_final: np.ndarray
    status: str
    iters: int
    sg_steps: int
    ncgs_steps: int
    ifo_total: int
    iso_total: int
    trace: list = field(default_factory=list)
    message: str = ""

    @property
    def domain_exits(self) -> int:
        return sum(not r.in_domain for r in self.trace)


class _Run:
    """Bookkeeping shared by the three drivers."""

    def __init__(self, oracle: ProblemOracle, x0, config: SncgConfig, rng):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (oracle.dim,):
            raise ContractError(f"x0 has shape {x0.shape}, expected ({oracle.dim},)")
        self.oracle = oracle
        self.config = config
        self.rng = np.random.default_rng(rng)
        self.x = x0.copy()
        self.ifo0, self.iso0 = oracle.counter.snapshot()
        self.start = time.perf_counter()
        self.trace: list[IterationRecord] = []
        self.sg_steps = 0
        self.ncgs_steps = 0
        self.best_x, self.best_f = x0.copy(), np.inf

    def counts(self):
        ifo, iso = self.oracle.counter.snapshot()
        return ifo - self.ifo0, iso - self.iso0

    def value(self, x):
        if not self.config.verification:
            return None
        f = self.oracle.value(x)
        if f < self.best_f:
            self.best_x, self.best_f = x.copy(), f
        return f

    def record(self, branch, grad_norm, grad_batch, ifo_step, iso_step, step=None):
        ifo, iso = self.counts()
        rec = IterationRecord(
            iter=len(self.trace) + 1, branch=branch, grad_norm=float(grad_norm),
            rayleigh=None if step is None else float(step.rayleigh),
            eps_nc=None if step is None else float(step.eps_nc),
            f=self.value(self.x), ifo=ifo, iso=iso, ifo_step=ifo_step, iso_step=iso_step,
            grad_batch=int(grad_batch),
            hess_batch=None if step is None else int(step.hess_batch_size),
            applications=None if step is None else int(step.curvature.stats.applications),
            in_domain=self.oracle.in_domain(self.x),
            wall_time=time.perf_counter() - self.start,
        )
        self.trace.append(rec)
        return rec

    def finish(self, status, x=None, message=""):
        if x is None:
            x = self.x
        if status == SOLVER_FAILURE and self.config.verification and np.isfinite(self.best_f):
            x = self.best_x
        ifo, iso = self.counts()
        return RunResult(x_final=np.array(x, dtype=float), status=status,
                         iters=len(self.trace), sg_steps=self.sg_steps,
                         ncgs_steps=self.ncgs_steps, ifo_total=ifo, iso_total=iso,
                         trace=self.trace, message=message)


def _capped(theory_cap: int, config: SncgConfig) -> int:
    if config.max_iters_override is None:
        return theory_cap
    return min(theory_cap, config.max_iters_override)


def sncg1(oracle: ProblemOracle, x0, config: SncgConfig, rng=None) -> RunResult:
    """NCG-S at every iteration with curvature tolerance max(eps2, |g|^alpha)/2.

    Returns ``x_j`` at the first iteration whose curvature estimate exceeds
    ``-eps2/2`` while ``|g(x_j)| <= eps1``.
    """
    run = _Run(oracle, x0, config, rng)
    eps1, eps2, alpha = config.eps1, config.eps2, config.alpha
    dprime = config.delta_prime
    cap = _capped(config.sncg1_cap, config)

    def tolerance(grad_norm):
        return max(eps2, grad_norm**alpha) / 2

    for _ in range(cap):
        try:
            step = ncgs_step(oracle, run.x, tolerance, dprime, eps1, eps2, config, run.rng)
        except (BudgetExceededError, SpectralBoundError) as exc:
            return run.finish(SOLVER_FAILURE, message=str(exc))
        run.ncgs_steps += 1
        run.record(step.branch, step.grad_norm, step.grad.batch_size, step.ifo, step.iso, step)
        if step.rayleigh > -eps2 / 2 and step.grad_norm <= eps1:
            return run.finish(CONVERGED)
        run.x = step.x_next
    return run.finish(ITER_CAP, message=f"no termination within {cap} iterations")


def sncg2(oracle: ProblemOracle, x0, config: SncgConfig, rng=None) -> RunResult:
    """SG steps while |g| >= eps1, NCG-S with fixed tolerance eps2/2 otherwise."""
    run = _Run(oracle, x0, config, rng)
    eps1, eps2 = config.eps1, config.eps2
    dprime = config.delta_prime
    eps4, _ = config.accuracies
    L1 = config.constants.L1
    total_cap = _capped(config.sg_cap + config.ncgs_cap, config)

    while len(run.trace) < total_cap:
        ifo_before, _ = oracle.counter.snapshot()
        grad = estimate_gradient(oracle, run.x, eps4, dprime, run.rng, config.policy)
        if grad.norm >= eps1:
            if run.sg_steps >= config.sg_cap:
                return run.finish(ITER_CAP, message=f"SG step cap {config.sg_cap} reached")
            run.sg_steps += 1
            ifo_step = oracle.counter.snapshot()[0] - ifo_before
            run.record(SG, grad.norm, grad.batch_size, ifo_step, 0)
            run.x = run.x - grad.g / L1
            continue
        if run.ncgs_steps >= config.ncgs_cap:
            return run.finish(ITER_CAP, message=f"NCG-S step cap {config.ncgs_cap} reached")
        try:
            step = ncgs_step(oracle, run.x, eps2 / 2, dprime, eps1, eps2, config, run.rng,
                             grad=grad)
        except (BudgetExceededError, SpectralBoundError) as exc:
            return run.finish(SOLVER_FAILURE, message=str(exc))
        run.ncgs_steps += 1
        ifo_step = oracle.counter.snapshot()[0] - ifo_before
        run.record(step.branch, grad.norm, grad.batch_size, ifo_step, step.iso, step)
        if step.rayleigh > -eps2 / 2:
            return run.finish(CONVERGED)
        run.x = step.x_next
    return run.finish(ITER_CAP, message=f"iteration cap {total_cap} reached")


def sgd_baseline(oracle: ProblemOracle, x0, config: SncgConfig, rng=None) -> RunResult:
    """Mini-batch SGD with step 1/L1; stops at |g| <= eps1 (first-order only)."""
    run = _Run(oracle, x0, config, rng)
    eps4, _ = config.accuracies
    L1 = config.constants.L1
    cap = _capped(1 + config.sg_cap, config)
    for _ in range(cap):
        ifo_before, _ = oracle.counter.snapshot()
        grad = estimate_gradient(oracle, run.x, eps4, config.delta_prime, run.rng,
                                 config.policy)
        run.sg_steps += 1
        run.record(SG, grad.norm, grad.batch_size, oracle.counter.snapshot()[0] - ifo_before, 0)
        if grad.norm <= config.eps1:
            return run.finish(CONVERGED)
        run.x = run.x - grad.g / L1
    return run.finish(ITER_CAP, message=f"no termination within {cap} iterations")


ALGORITHMS = {"sncg1": sncg1, "sncg2": sncg2, "sgd": sgd_baseline}
