"""Dense, exact checks and brute-force oracles used to verify runs and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import ContractError, ProblemOracle

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class StationarityReport:
    grad_norm: float
    lambda_min: float
    pass_first_order: bool
    pass_second_order: bool

    @property
    def passed(self) -> bool:
        return self.pass_first_order and self.pass_second_order

    def to_dict(self) -> dict:
        return {"grad_norm": self.grad_norm, "lambda_min": self.lambda_min,
                "pass_first_order": self.pass_first_order,
                "pass_second_order": self.pass_second_order}


def dense_min_eig(H) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of a dense symmetric matrix (LAPACK ``syevd``)."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise ContractError("matrix is not symmetric")
    w, V = np.linalg.eigh(H)
    return float(w[0]), V[:, 0]


def stationarity_flags(grad_norm, lambda_min, eps1, eps2) -> tuple[bool, bool]:
    """Pass flags against the terminal thresholds 2 eps1 and -2 eps2."""
    return bool(grad_norm <= 2 * eps1), bool(lambda_min >= -2 * eps2)


def check_stationarity(oracle: ProblemOracle, x, eps1, eps2) -> StationarityReport:
    """Exact first- and second-order check of ``x`` (does not touch IFO/ISO)."""
    _, grad, hess = oracle.exact_eval(x)
    gn = float(np.linalg.norm(grad))
    lam, _ = dense_min_eig(0.5 * (hess + hess.T))
    first, second = stationarity_flags(gn, lam, eps1, eps2)
    return StationarityReport(gn, lam, first, second)


def fd_hvp(oracle: ProblemOracle, x, xi, v, h=1e-4) -> np.ndarray:
    """Central difference (grad f(x + h v; xi) - grad f(x - h v; xi)) / 2h, uncounted."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    k = oracle._check_index(xi)
    return (oracle._sample_grad(x + h * v, k) - oracle._sample_grad(x - h * v, k)) / (2 * h)


def fd_grad(f, x, h=1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def population_mean_grad(oracle: ProblemOracle, x) -> np.ndarray:
    """Equal-weight average of every per-sample gradient, one at a time (uncounted)."""
    n = oracle.population.size
    if n is None:
        raise ContractError("requires a finite population")
    x = np.asarray(x, dtype=float)
    return sum(oracle._sample_grad(x, k) for k in range(n)) / n


def population_mean_hessian(oracle: ProblemOracle, x) -> np.ndarray:
    """Equal-weight average of dense per-sample Hessians (uncounted)."""
    n = oracle.population.size
    if n is None:
        raise ContractError("requires a finite population")
    return sum(oracle.sample_hessian(x, k) for k in range(n)) / n
