import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfkernel.errors import FactorizationFailure, LadderExhausted, ShapeMismatch
from rfkernel.krr import (
    KrrModel,
    classify_krr,
    fit_krr,
    lambda_ladder,
    predict_krr,
    residual,
    select_lambda,
)


def _random_pd(n, rng, floor=0.1):
    A = rng.standard_normal((n, n))
    return A @ A.T + floor * np.eye(n)


def _gauss_solve(A, b):
    """Gaussian elimination with partial pivoting, written out longhand."""
    A = [list(map(float, row)) + [float(v)] for row, v in zip(A, b)]
    n = len(A)
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(A[r][col]))
        A[col], A[piv] = A[piv], A[col]
        for r in range(col + 1, n):
            f = A[r][col] / A[col][col]
            for c in range(col, n + 1):
                A[r][c] -= f * A[col][c]
    x = [0.0] * n
    for r in reversed(range(n)):
        x[r] = (A[r][n] - sum(A[r][c] * x[c] for c in range(r + 1, n))) / A[r][r]
    return np.array(x)


def test_identity_takes_first_rung():
    K = np.eye(4)
    assert select_lambda(K) == lambda_ladder(K)[0] == pytest.approx(1e-8)


def test_rank_one_ones_takes_first_rung():
    K = np.ones((3, 3))
    assert select_lambda(K) == lambda_ladder(K)[0]


def test_negative_eigenvalue_two_by_two():
    # eigenvalues 1.1 and -0.1
    K = np.array([[0.5, 0.6], [0.6, 0.5]])
    assert np.linalg.eigvalsh(K).min() == pytest.approx(-0.1)
    lam = select_lambda(K)
    ladder = lambda_ladder(K)
    k = int(np.flatnonzero(ladder == lam)[0])
    assert lam > 0.1
    assert ladder[k - 1] <= 0.1


def test_ladder_exhausted():
    K = -1e30 * np.eye(2)
    K[0, 0] = 1.0
    with pytest.raises(LadderExhausted):
        select_lambda(K)


def test_identity_solve():
    model = fit_krr(np.eye(2), [2.0, 4.0], lam=1.0)
    np.testing.assert_allclose(model.alpha, [1.0, 2.0])


def test_zero_kernel_returns_y():
    y = np.array([0.3, -1.2, 5.0])
    np.testing.assert_allclose(fit_krr(np.zeros((3, 3)), y, lam=1.0).alpha, y)


def test_matches_gaussian_elimination():
    rng = np.random.default_rng(0)
    K = _random_pd(5, rng)
    y = rng.standard_normal(5)
    model = fit_krr(K, y, lam=0.5)
    np.testing.assert_allclose(model.alpha, _gauss_solve(K + 0.5 * np.eye(5), y), rtol=1e-10)


def test_errors():
    with pytest.raises(ShapeMismatch):
        fit_krr(np.eye(3), np.ones(2), lam=1.0)
    with pytest.raises(FactorizationFailure):
        fit_krr(-np.eye(2), np.ones(2), lam=0.5)
    model = KrrModel(np.ones(3), 1.0, np.arange(3))
    with pytest.raises(ShapeMismatch):
        predict_krr(model, np.ones((2, 4)))


def test_predict_examples():
    model = fit_krr(np.eye(3), [1.0, 2.0, 3.0], lam=1.0)
    np.testing.assert_array_equal(predict_krr(model, np.zeros((1, 3))), [0.0])
    np.testing.assert_array_equal(predict_krr(model, np.eye(3)), model.alpha)


def test_training_fit_approaches_y_down_the_ladder():
    rng = np.random.default_rng(1)
    X = rng.random((10, 2))
    K = np.exp(-np.abs(X[:, None, :] - X[None, :, :]).sum(axis=2))
    y = rng.standard_normal(10)
    errors = []
    for lam in lambda_ladder(K)[:40][::-1]:
        errors.append(np.max(np.abs(predict_krr(fit_krr(K, y, lam), K) - y)))
    assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 1e-6


def test_classify_threshold_and_tie():
    model = KrrModel(np.array([1.0]), 1.0, np.arange(1))
    np.testing.assert_array_equal(classify_krr(model, [[0.3], [-0.3], [0.0]]), [1.0, -1.0, 1.0])


def test_label_symmetry():
    rng = np.random.default_rng(2)
    K = _random_pd(8, rng)
    y = np.where(rng.random(8) > 0.5, 1.0, -1.0)
    Kx = rng.random((5, 8))
    a = predict_krr(fit_krr(K, y), Kx)
    b = predict_krr(fit_krr(K, -y), Kx)
    np.testing.assert_allclose(a, -b)
    nz = a != 0
    np.testing.assert_array_equal(classify_krr(fit_krr(K, y), Kx)[nz],
                                  -classify_krr(fit_krr(K, -y), Kx)[nz])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1), st.floats(1e-3, 10), st.floats(1.0, 100))
def test_shrinkage(n, seed, lam, factor):
    rng = np.random.default_rng(seed)
    K = _random_pd(n, rng)
    y = rng.standard_normal(n)
    small = fit_krr(K, y, lam)
    big = fit_krr(K, y, lam * factor)
    assert np.linalg.norm(big.alpha) <= np.linalg.norm(small.alpha) * (1 + 1e-12)
    assert residual(K, small, y) <= 1e-8 * (1 + np.max(np.abs(y)))
