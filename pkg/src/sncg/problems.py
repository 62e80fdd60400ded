"""Built-in test landscapes with analytically known constants.

Every problem confines its constants to a documented region (a box or a
ball of radius ``box_radius``); globally the quartic terms have unbounded
Hessians, so ``L1``/``L2``/``G`` are only claimed on that region and
``in_domain`` reports whether an iterate is still inside it.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .oracle import (
    MIN_NOISE_SCALE,
    ContractError,
    Population,
    ProblemConstants,
    ProblemOracle,
)

_STREAM_CHUNK = 65536
_DOMAIN_TOL = 1e-12
# f(x0) - f* can be exactly zero (start at a minimizer); any larger value is a valid bound.
_MIN_GAP = 1e-12


def resolve_x0(spec, dim: int, radius: float) -> np.ndarray:
    """Turn a start-point spec into a vector.

    Accepts ``None``/``"origin"``, ``"corner"`` (0.9 * radius in every
    coordinate), an explicit list, or ``{"random": scale, "seed": s}`` for a
    uniform draw from the box of half-width ``scale``.
    """
    if spec is None or (isinstance(spec, str) and spec == "origin"):
        return np.zeros(dim)
    if isinstance(spec, str):
        if spec == "corner":
            return np.full(dim, 0.9 * radius)
        raise ContractError(f"unknown x0 spec {spec!r}")
    if isinstance(spec, dict):
        scale = float(spec.get("random", 1.0))
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        return rng.uniform(-scale, scale, size=dim)
    x0 = np.asarray(spec, dtype=float)
    if x0.shape != (dim,):
        raise ContractError(f"x0 has shape {x0.shape}, expected ({dim},)")
    return x0


class SaddleQuadratic(ProblemOracle):
    """f(x; xi) = x'diag(lam)x/2 + xi'x with zero-mean bounded noise xi.

    The finite population holds ``n_samples`` centered noise vectors rescaled
    to a maximum norm of ``noise_scale``; with ``stream=True`` each draw is
    uniform in a cube of half-width ``noise_scale/sqrt(d)``. Bounded noise of
    norm at most ``B`` satisfies the sub-exponential condition with ``G = B``.

    ``L2`` is a free positive choice (the Hessian is constant). ``Delta`` is
    the gap to the minimum over the box ``|x|_inf <= box_radius`` since the
    quadratic is unbounded below when some eigenvalue is negative.
    """

    name = "quadratic"

    def __init__(self, eigenvalues, noise_scale=0.0, n_samples=100, stream=False,
                 box_radius=2.0, hessian_lipschitz=1.0, x0=None, seed=0, noise_vectors=None):
        lam = np.asarray(eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ContractError("eigenvalues must be a non-empty vector")
        if np.all(lam == 0):
            raise ContractError("eigenvalues must not all vanish")
        dim = lam.size
        self.lam = lam
        self.radius = float(box_radius)
        self.stream = bool(stream) and noise_scale > 0
        self.noise_scale = float(noise_scale)
        if self.stream:
            population = Population(None)
            G = self.noise_scale
        else:
            n = int(n_samples) if noise_scale > 0 else 1
            rng = np.random.default_rng(seed)
            xi = np.zeros((n, dim))
            if noise_vectors is not None:
                xi = np.asarray(noise_vectors, dtype=float)
                n = xi.shape[0]
            elif noise_scale > 0 and n > 1:
                xi = rng.standard_normal((n, dim))
                xi -= xi.mean(axis=0)
                xi *= noise_scale / np.linalg.norm(xi, axis=1).max()
            self.noise = xi
            self.noise_mean = xi.mean(axis=0)
            population = Population(n)
            G = float(np.linalg.norm(xi - self.noise_mean, axis=1).max())
        x0 = resolve_x0(x0, dim, self.radius)
        f_low = 0.5 * float(np.sum(np.minimum(lam, 0.0))) * self.radius**2
        gap = 0.5 * float(x0 @ (lam * x0)) - f_low
        constants = ProblemConstants(
            L1=float(np.abs(lam).max()),
            L2=float(hessian_lipschitz),
            G=max(G, MIN_NOISE_SCALE),
            Delta=max(gap, _MIN_GAP),
        )
        super().__init__(dim, population, constants, x0)

    def in_domain(self, x) -> bool:
        return bool(np.max(np.abs(x)) <= self.radius + _DOMAIN_TOL)

    # stream draws: element i of batch seed s is row i of default_rng(s)
    def _stream_chunks(self, seed, size):
        rng = np.random.default_rng(seed)
        half = self.noise_scale / math.sqrt(self.dim)
        done = 0
        while done < size:
            m = min(_STREAM_CHUNK, size - done)
            yield rng.uniform(-half, half, size=(m, self.dim))
            done += m

    def _noise_of(self, xi):
        if self.population.finite:
            return self.noise[xi]
        seed, pos = xi
        for chunk in self._stream_chunks(seed, pos + 1):
            pass
        return chunk[-1]

    def _sample_value(self, x, xi):
        return 0.5 * x @ (self.lam * x) + self._noise_of(xi) @ x

    def _sample_grad(self, x, xi):
        return self.lam * x + self._noise_of(xi)

    def _sample_hvp(self, x, xi, v):
        return self.lam * v

    def _sample_hessian(self, x, xi):
        return np.diag(self.lam)

    def _mean_grad(self, x, weights):
        return self.lam * x + weights @ self.noise

    def _mean_hvp(self, x, weights, v):
        return self.lam * v

    def _stream_mean_grad(self, x, batch):
        total = np.zeros(self.dim)
        for chunk in self._stream_chunks(batch.seed, batch.size):
            total += chunk.sum(axis=0)
        return self.lam * x + total / batch.size

    def _stream_mean_hvp(self, x, batch, v):
        return self.lam * v

    def _value(self, x):
        noise_mean = 0.0 if self.stream else self.noise_mean @ x
        return 0.5 * x @ (self.lam * x) + noise_mean

    def _grad(self, x):
        return self.lam * x + (0.0 if self.stream else self.noise_mean)

    def _hessian(self, x):
        return np.diag(self.lam)

    def describe(self):
        out = super().describe()
        out.update(box_radius=self.radius, stream=self.stream)
        return out


def _cubic_peak(radius: float) -> float:
    """max of |t^3 - t| over |t| <= radius."""
    peak = abs(radius**3 - radius)
    if radius >= 1 / math.sqrt(3):
        peak = max(peak, 2 / (3 * math.sqrt(3)))
    return peak


class SeparableQuartic(ProblemOracle):
    """f(x; k) = sum_i w_ki (x_i^4/4 - x_i^2/2), strict saddle at the origin.

    Sample weights are ``1 + weight_spread * u`` with ``u`` centered over the
    population and scaled into [-1, 1]. With ``weight_spread=0`` every sample
    is identical (noiseless). Constants hold on the box ``|x|_inf <= R``:
    per-sample ``L1 = max|w| * max(3R^2 - 1, 1)``, full-Hessian
    ``L2 = 6R * max|wbar|``, and the noise bound
    ``G = max_k |w_k - wbar| * max_{|t|<=R} |t^3 - t|``.
    """

    name = "quartic"

    def __init__(self, dim, n_samples=1, weight_spread=0.0, box_radius=1.5, x0=None, seed=0,
                 weights=None):
        dim = int(dim)
        if box_radius < 1:
            raise ContractError("box_radius must be >= 1 so the minimizers lie inside the box")
        self.radius = float(box_radius)
        n = int(n_samples)
        if n < 1:
            raise ContractError("n_samples must be >= 1")
        if weights is not None:
            W = np.asarray(weights, dtype=float)
            n = W.shape[0]
        elif weight_spread > 0 and n > 1:
            rng = np.random.default_rng(seed)
            u = rng.uniform(-1.0, 1.0, size=(n, dim))
            u -= u.mean(axis=0)
            u /= np.abs(u).max()
            W = 1.0 + weight_spread * u
        else:
            W = np.ones((n, dim))
        self.W = W
        self.wbar = W.mean(axis=0)
        if np.any(self.wbar <= 0):
            raise ContractError("mean weights must be positive")
        R = self.radius
        x0 = resolve_x0(x0, dim, R)
        f_star = -0.25 * float(self.wbar.sum())
        gap = self._quartic(x0) @ self.wbar - f_star
        noise = float(np.linalg.norm(W - self.wbar, axis=1).max()) * _cubic_peak(R)
        constants = ProblemConstants(
            L1=float(np.abs(W).max()) * max(3 * R**2 - 1, 1.0),
            L2=6 * R * float(np.abs(self.wbar).max()),
            G=max(noise, MIN_NOISE_SCALE),
            Delta=max(float(gap), _MIN_GAP),
        )
        super().__init__(dim, Population(n), constants, x0)

    @staticmethod
    def _quartic(x):
        return x**4 / 4 - x**2 / 2

    def in_domain(self, x) -> bool:
        return bool(np.max(np.abs(x)) <= self.radius + _DOMAIN_TOL)

    def _sample_value(self, x, k):
        return self.W[k] @ self._quartic(x)

    def _sample_grad(self, x, k):
        return self.W[k] * (x**3 - x)

    def _sample_hvp(self, x, k, v):
        return self.W[k] * (3 * x**2 - 1) * v

    def _sample_hessian(self, x, k):
        return np.diag(self.W[k] * (3 * x**2 - 1))

    def _mean_grad(self, x, weights):
        return (weights @ self.W) * (x**3 - x)

    def _mean_hvp(self, x, weights, v):
        return (weights @ self.W) * (3 * x**2 - 1) * v

    def _value(self, x):
        return self.wbar @ self._quartic(x)

    def _grad(self, x):
        return self.wbar * (x**3 - x)

    def _hessian(self, x):
        return np.diag(self.wbar * (3 * x**2 - 1))

    def describe(self):
        out = super().describe()
        out.update(box_radius=self.radius)
        return out


class PCAFiniteSum(ProblemOracle):
    """f(x; i) = -(a_i'x)^2/2 + |x|^4/4 with unit vectors a_i.

    The origin is a strict saddle with Hessian ``-C``, ``C = mean a_i a_i'``;
    global minimizers sit at ``sqrt(mu) u`` for the top eigenpair (mu, u) of
    ``C``, so ``f* = -mu^2/4``. Constants hold on the Euclidean ball
    ``|x| <= R``: ``L1 = max(3R^2, 1)``, ``L2 = 6R`` and
    ``G = R * max_i |C - a_i a_i'|_2``.
    """

    name = "pca"

    def __init__(self, dim, n_samples=50, box_radius=1.5, x0=None, seed=0, vectors=None):
        dim = int(dim)
        if box_radius < 1:
            raise ContractError("box_radius must be >= 1 so the minimizers lie inside the ball")
        if vectors is None:
            rng = np.random.default_rng(seed)
            A = rng.standard_normal((int(n_samples), dim))
            A /= np.linalg.norm(A, axis=1, keepdims=True)
        else:
            A = np.asarray(vectors, dtype=float)
        self.A = A
        n = A.shape[0]
        self.C = A.T @ A / n
        self.radius = R = float(box_radius)
        mu = float(np.linalg.eigvalsh(self.C)[-1])
        x0 = resolve_x0(x0, dim, R / math.sqrt(dim))
        f_star = -mu**2 / 4
        spread = 1.0
        if n * dim * dim <= 4_000_000:
            diffs = self.C[None, :, :] - A[:, :, None] * A[:, None, :]
            spread = float(np.abs(np.linalg.eigvalsh(diffs)).max())
        constants = ProblemConstants(
            L1=max(3 * R**2, 1.0),
            L2=6 * R,
            G=max(R * spread, MIN_NOISE_SCALE),
            Delta=max(self._full_value(x0) - f_star, _MIN_GAP),
        )
        super().__init__(dim, Population(n), constants, x0)

    def _full_value(self, x):
        return float(-0.5 * x @ self.C @ x + 0.25 * (x @ x) ** 2)

    def in_domain(self, x) -> bool:
        return bool(np.linalg.norm(x) <= self.radius + _DOMAIN_TOL)

    def _sample_value(self, x, i):
        return -0.5 * (self.A[i] @ x) ** 2 + 0.25 * (x @ x) ** 2

    def _sample_grad(self, x, i):
        a = self.A[i]
        return -a * (a @ x) + (x @ x) * x

    def _sample_hvp(self, x, i, v):
        a = self.A[i]
        return -a * (a @ v) + (x @ x) * v + 2 * x * (x @ v)

    def _sample_hessian(self, x, i):
        a = self.A[i]
        return -np.outer(a, a) + (x @ x) * np.eye(self.dim) + 2 * np.outer(x, x)

    def _mean_grad(self, x, weights):
        return -self.A.T @ (weights * (self.A @ x)) + (x @ x) * x

    def _mean_hvp(self, x, weights, v):
        return -self.A.T @ (weights * (self.A @ v)) + (x @ x) * v + 2 * x * (x @ v)

    def _value(self, x):
        return self._full_value(x)

    def _grad(self, x):
        return -self.C @ x + (x @ x) * x

    def _hessian(self, x):
        return -self.C + (x @ x) * np.eye(self.dim) + 2 * np.outer(x, x)

    def describe(self):
        out = super().describe()
        out.update(box_radius=self.radius)
        return out


# --------------------------------------------------------------------------
# user-defined problems from a population matrix file
# --------------------------------------------------------------------------

def read_population_matrix(path) -> np.ndarray:
    """Read a population matrix, one sample per row.

    ``.npy`` files are loaded with numpy; anything else is parsed as
    comma-separated text without a header (``#`` starts a comment).
    """
    path = Path(path)
    if path.suffix == ".npy":
        M = np.load(path)
    else:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < 1:
        raise ContractError(f"{path}: population matrix must be 2-D with at least one row")
    if not np.all(np.isfinite(M)):
        raise ContractError(f"{path}: population matrix contains non-finite entries")
    return M


def _estimate_noise_scale(problem: ProblemOracle, x) -> float:
    """Largest per-sample deviation of the gradient at ``x`` (finite populations).

    Exact sup of the noise at a single point; labeled as estimated because the
    bound is not checked away from ``x``.
    """
    full = problem._grad(x)
    worst = 0.0
    for k in range(problem.population.size):
        worst = max(worst, float(np.linalg.norm(problem._sample_grad(x, k) - full)))
    return worst


def load_population_problem(path, sidecar=None) -> ProblemOracle:
    """Build a problem from a population matrix plus a JSON sidecar.

    The sidecar (default: same stem, ``.json``) declares::

        {"objective": "pca" | "quartic" | "quadratic",
         "L1": ..., "L2": ..., "Delta": ..., "G": ... (optional),
         "x0": [...] (optional), "box_radius": ... (optional),
         "eigenvalues": [...] (quadratic only)}

    Rows are the vectors ``a_i`` (pca), weight vectors ``w_k`` (quartic) or
    noise vectors ``xi_k`` (quadratic). Declared constants replace the
    analytic ones; a missing ``G`` is estimated at ``x0`` and labeled so.
    """
    path = Path(path)
    sidecar = Path(sidecar) if sidecar is not None else path.with_suffix(".json")
    meta = json.loads(sidecar.read_text())
    M = read_population_matrix(path)
    dim = M.shape[1]
    objective = meta.get("objective")
    radius = float(meta.get("box_radius", 1.5))
    x0 = meta.get("x0")
    if objective == "pca":
        problem = PCAFiniteSum(dim, box_radius=radius, x0=x0, vectors=M)
    elif objective == "quartic":
        problem = SeparableQuartic(dim, box_radius=radius, x0=x0, weights=M)
    elif objective == "quadratic":
        lam = meta.get("eigenvalues")
        if lam is None or len(lam) != dim:
            raise ContractError(f"{sidecar}: quadratic objective needs {dim} eigenvalues")
        problem = SaddleQuadratic(lam, box_radius=radius, x0=x0, noise_vectors=M)
    else:
        raise ContractError(f"{sidecar}: unknown objective {objective!r}")
    missing = [k for k in ("L1", "L2", "Delta") if k not in meta]
    if missing:
        raise ContractError(f"{sidecar}: missing declared constants {missing}")
    if "G" in meta:
        G, source = float(meta["G"]), "declared"
    else:
        G, source = max(_estimate_noise_scale(problem, problem.x0), MIN_NOISE_SCALE), "estimated@x0"
    problem.constants = ProblemConstants(float(meta["L1"]), float(meta["L2"]), G,
                                         float(meta["Delta"]), G_source=source)
    problem.name = f"file:{path.name}"
    return problem


PROBLEM_KINDS = {
    "quadratic": "saddle quadratic x'diag(lam)x/2 + xi'x, additive bounded gradient noise",
    "quartic": "separable quartic sum_i w_ki (x_i^4/4 - x_i^2/2), strict saddle at 0",
    "pca": "PCA-style finite sum -(a_i'x)^2/2 + |x|^4/4 with random unit a_i",
    "file": "population matrix file (.csv/.npy) with a JSON sidecar of declared constants",
}


def make_problem(kind: str, dim: int | None = None, **params) -> ProblemOracle:
    """Construct a built-in problem by kind name."""
    if kind == "quadratic":
        if "eigenvalues" not in params:
            if dim is None:
                raise ContractError("quadratic needs eigenvalues or dim")
            lo = float(params.pop("min_eigenvalue", -1.0))
            params["eigenvalues"] = np.linspace(lo, 1.0, int(dim))
        return SaddleQuadratic(**params)
    if kind == "quartic":
        return SeparableQuartic(dim, **params)
    if kind == "pca":
        return PCAFiniteSum(dim, **params)
    if kind == "file":
        return load_population_problem(params.pop("path"), **params)
    raise ContractError(f"unknown problem kind {kind!r}; choose from {sorted(PROBLEM_KINDS)}")
