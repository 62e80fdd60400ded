"""Stochastic negative-curvature methods for second-order stationary points."""

from .config import SncgConfig
from .driver import ALGORITHMS, RunResult, sgd_baseline, sncg1, sncg2
from .estimator import (
    BatchPolicy,
    build_hessian_operator,
    estimate_gradient,
    grad_batch_size,
    hess_batch_size,
)
from .ncgs import ncgs_step, sufficient_decrease_bound
from .negcurv import min_eigvec, shift_operator
from .oracle import ContractError, ProblemConstants, ProblemOracle, sample_indices
from .problems import PCAFiniteSum, SaddleQuadratic, SeparableQuartic, make_problem
from .verify import check_stationarity, dense_min_eig

__version__ = "0.1.0"
