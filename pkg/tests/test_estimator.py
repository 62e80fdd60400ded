import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sncg.estimator import (
    BatchPolicy,
    HessianOperator,
    build_hessian_operator,
    estimate_gradient,
    grad_batch_size,
    grad_batch_size_raw,
    hess_batch_size,
    hess_batch_size_raw,
    theoretical_accuracies,
)
from sncg.oracle import ContractError, explicit_batch, full_batch, sample_indices
from sncg.problems import PCAFiniteSum, SaddleQuadratic, SeparableQuartic


def test_grad_batch_size_reference_value():
    # 4 (1 + 3 ln(10)^2) / 0.01 = 6762.28
    assert grad_batch_size(1, 0.1, 0.1) == 6763


def test_grad_batch_size_unit_case():
    assert grad_batch_size(1, 1 - 1e-12, math.exp(-1)) == 16


def test_hess_batch_size_reference_value():
    # 1600 ln 200 = 8477.31
    assert hess_batch_size(1, 0.1, 0.1, 10) == 8478


def test_hess_batch_size_unit_log_case():
    assert hess_batch_size(1, 1 - 1e-12, 2 / math.e, 1) == 16


@given(G=st.floats(0.01, 10), eps=st.floats(0.01, 0.99), delta=st.floats(0.01, 0.99))
def test_grad_batch_size_scaling(G, eps, delta):
    raw = grad_batch_size_raw(G, eps, delta)
    assert math.isclose(grad_batch_size_raw(2 * G, eps, delta), 4 * raw, rel_tol=1e-12)
    assert math.isclose(grad_batch_size_raw(G, eps / 2, delta), 4 * raw, rel_tol=1e-12)
    assert grad_batch_size(G, eps, delta) >= raw - 1e-9 * raw
    # smaller delta never shrinks the batch
    assert grad_batch_size(G, eps, delta / 2) >= grad_batch_size(G, eps, delta)


@given(L1=st.floats(0.01, 10), eps=st.floats(0.01, 0.99), delta=st.floats(0.01, 0.99),
       d=st.integers(1, 1000))
def test_hess_batch_size_scaling(L1, eps, delta, d):
    raw = hess_batch_size_raw(L1, eps, delta, d)
    assert math.isclose(hess_batch_size_raw(2 * L1, eps, delta, d), 4 * raw, rel_tol=1e-12)
    assert math.isclose(hess_batch_size_raw(L1, eps / 2, delta, d), 4 * raw, rel_tol=1e-12)
    assert hess_batch_size(L1, eps, delta, d + 1) >= hess_batch_size(L1, eps, delta, d)


@pytest.mark.parametrize("args", [(0, 0.1, 0.1), (1, 0, 0.1), (1, 1.0, 0.1), (1, 0.1, 0),
                                  (1, 0.1, 1.0), (-1, 0.1, 0.1), (1, float("nan"), 0.1)])
def test_grad_batch_size_rejects_out_of_range(args):
    with pytest.raises(ContractError):
        grad_batch_size(*args)


@pytest.mark.parametrize("args", [(0, 0.1, 0.1, 3), (1, 1.5, 0.1, 3), (1, 0.1, 1.0, 3),
                                  (1, 0.1, 0.1, 0)])
def test_hess_batch_size_rejects_out_of_range(args):
    with pytest.raises(ContractError):
        hess_batch_size(*args)


def test_theoretical_accuracies():
    eps4, eps3 = theoretical_accuracies(0.1, 0.1, 1.0)
    assert eps4 == pytest.approx(min(0.1 / (2 * math.sqrt(2)), 0.1**2 / 24), rel=1e-14)
    assert eps3 == pytest.approx(0.1 / 24, rel=1e-14)


def test_practical_policy_caps():
    policy = BatchPolicy("practical", grad_cap=50, hess_cap=20)
    assert policy.grad_size(1, 0.1, 0.1) == 50
    assert policy.hess_size(1, 0.1, 0.1, 10) == 20
    assert policy.grad_size(1e-12, 0.1, 0.1) == 1
    with pytest.raises(ContractError):
        BatchPolicy("practical", grad_cap=10)
    with pytest.raises(ContractError):
        BatchPolicy("sloppy")


# ------------------------------------------------------------- estimates

def test_noiseless_estimate_is_exact(rng):
    p = SeparableQuartic(5, n_samples=7)
    x = rng.uniform(-1, 1, 5)
    est = estimate_gradient(p, x, 0.1, 0.1, rng, BatchPolicy("practical", 13, 13))
    np.testing.assert_allclose(est.g, p.exact_eval(x).grad, atol=1e-12)
    H = build_hessian_operator(p, x, 0.1, 0.1, rng, BatchPolicy("practical", 13, 13))
    np.testing.assert_allclose(H.materialize(), p.exact_eval(x).hessian, atol=1e-12)


@pytest.mark.parametrize("which", ["quartic", "pca", "noisy_quadratic"])
def test_full_batch_is_exact(which, request, rng):
    p = request.getfixturevalue(which)
    x = rng.uniform(-0.3, 0.3, p.dim)
    exact = p.exact_eval(x)
    est = estimate_gradient(p, x, 0.1, 0.1, rng, BatchPolicy("full"))
    assert est.batch_size == p.population.size
    np.testing.assert_allclose(est.g, exact.grad, atol=1e-12)
    H = build_hessian_operator(p, x, 0.1, 0.1, rng, BatchPolicy("full"))
    assert np.linalg.norm(H.materialize() - exact.hessian, 2) <= 1e-12


def test_estimate_averages_sample_gradients(quartic, rng):
    x = rng.uniform(-1, 1, 6)
    idx = [3, 3, 9, 0, 17]
    est = estimate_gradient(quartic, x, 0.1, 0.1, rng, batch=explicit_batch(quartic, idx))
    ref = np.mean([quartic.sample_grad(x, i) for i in idx], axis=0)
    np.testing.assert_allclose(est.g, ref, atol=1e-14)
    assert est.norm == pytest.approx(np.linalg.norm(ref))


def test_gradient_concentration_monte_carlo():
    p = SaddleQuadratic([1.0, 0.5, -0.5, -1.0], noise_scale=0.05, n_samples=400, seed=1)
    x = np.array([0.3, -0.2, 0.1, 0.4])
    truth = p.exact_eval(x).grad
    eps4, delta = 0.05, 0.1
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(1000):
        est = estimate_gradient(p, x, eps4, delta, rng)
        hits += np.linalg.norm(est.g - truth) <= eps4
    assert est.batch_size == grad_batch_size(p.constants.G, eps4, delta)
    assert hits / 1000 >= 1 - delta


def test_hessian_concentration_monte_carlo():
    p = PCAFiniteSum(5, n_samples=40, box_radius=1.0, seed=3)
    x = np.array([0.2, -0.3, 0.1, 0.0, 0.4])
    truth = p.exact_eval(x).hessian
    eps3, delta = 0.5, 0.1
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(200):
        H = build_hessian_operator(p, x, eps3, delta, rng)
        hits += np.linalg.norm(H.materialize() - truth, 2) <= eps3
    assert H.batch_size == hess_batch_size(p.constants.L1, eps3, delta, 5)
    assert hits / 200 >= 1 - delta


# -------------------------------------------------------------- operator

def test_operator_linear_symmetric_and_bounded(builtins, rng):
    for p in builtins:
        x = rng.uniform(-0.5, 0.5, p.dim) / np.sqrt(p.dim)
        H = HessianOperator(p, x, sample_indices(p, 9, rng), eps3=0.1)
        u, v = rng.standard_normal((2, p.dim))
        np.testing.assert_allclose(H @ (2 * u - v), 2 * (H @ u) - H @ v, atol=1e-12)
        assert u @ (H @ v) == pytest.approx(v @ (H @ u), abs=1e-12)
        M = H.materialize()
        assert np.linalg.norm(M, 2) <= p.constants.L1 * (1 + 1e-12)


def test_operator_iso_accounting(quartic, rng):
    quartic.counter.reset()
    H = build_hessian_operator(quartic, np.zeros(6), 0.1, 0.1, rng,
                               BatchPolicy("practical", 10, 11))
    for _ in range(5):
        H.apply(np.ones(6))
    assert H.applications == 5
    assert quartic.counter.iso == 5 * 11
    assert quartic.counter.ifo == 0


def test_operator_keeps_its_batch(pca, rng):
    H = build_hessian_operator(pca, np.full(5, 0.1), 0.1, 0.1, rng,
                               BatchPolicy("practical", 4, 4))
    v = rng.standard_normal(5)
    np.testing.assert_array_equal(H @ v, H @ v)


def test_full_batch_counts_population(pca):
    b = full_batch(pca)
    assert b.size == 30 and np.all(b.counts == 1)
