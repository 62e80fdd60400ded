import numpy as np
import pytest

from sncg.problems import PCAFiniteSum, SaddleQuadratic, SeparableQuartic


def random_symmetric(rng, d, lo=-1.0, hi=1.0):
    """Symmetric matrix with eigenvalues drawn uniformly from [lo, hi]."""
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = rng.uniform(lo, hi, size=d)
    H = (Q * lam) @ Q.T
    return 0.5 * (H + H.T), lam


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quartic():
    return SeparableQuartic(6, n_samples=40, weight_spread=0.3, box_radius=1.5, seed=2)


@pytest.fixture
def pca():
    return PCAFiniteSum(5, n_samples=30, box_radius=1.2, seed=4)


@pytest.fixture
def noisy_quadratic():
    return SaddleQuadratic([2.0, 0.5, -0.3, -1.0], noise_scale=0.2, n_samples=25, seed=5)


@pytest.fixture
def builtins(quartic, pca, noisy_quadratic):
    return [quartic, pca, noisy_quadratic]


# one line per acceptance criterion, echoed again at the end of the session
ACCEPTANCE_LINES: list = []


def report_criterion(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
