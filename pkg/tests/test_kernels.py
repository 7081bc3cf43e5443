import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rfkernel.errors import NonPositiveSigma, ShapeMismatch, ZeroVariance
from rfkernel.forest import Forest, Tree, TreeParams, fit_forest
from rfkernel.kernels import (
    KernelMatrix,
    co_terminal_counts,
    kernel_value_histogram,
    laplace_kernel,
    mantel_statistic,
    read_kernel,
    rf_kernel,
    write_kernel,
)


def _stump(feature, threshold):
    return Tree.from_nodes([feature, -1, -1], [threshold, 0.0, 0.0], [1, -1, -1], [2, -1, -1],
                           [0.0, 0.0, 1.0])


def _forest(trees, p=2):
    return Forest(tuple(trees), TreeParams().resolve("continuous", p), "continuous", p, 0)


def _blobs(seed=0, per=30, k=3, spread=0.3):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [6, 0], [0, 6], [6, 6]][:k], dtype=float)
    X = np.vstack([c + spread * rng.standard_normal((per, 2)) for c in centers])
    return X, np.repeat(np.arange(k), per)


def test_identical_rows_give_one():
    X = np.random.default_rng(0).random((40, 3))
    forest = fit_forest(X, X[:, 0], n_trees=20)
    K = rf_kernel(forest, X[:1], np.vstack([X[0], X[5]]))
    assert K.values[0, 0] == 1.0


def test_single_leaf_forest_all_ones():
    one = _forest([Tree.from_nodes([-1], [0.0], [-1], [-1], [0.0])])
    X = np.random.default_rng(1).random((5, 2))
    np.testing.assert_array_equal(rf_kernel(one, X).values, 1.0)


def test_hand_built_four_tree_forest():
    # rows a=(0.2, 0.2) and b=(0.4, 0.9) share a leaf in the first three stumps only
    forest = _forest([_stump(0, 0.5), _stump(0, 0.6), _stump(1, 0.95), _stump(1, 0.5)])
    A = np.array([[0.2, 0.2]])
    B = np.array([[0.4, 0.9]])
    brute = sum(
        1 for t in forest.trees
        if (A[0, t.feature[0]] <= t.threshold[0]) == (B[0, t.feature[0]] <= t.threshold[0])
    )
    assert brute == 3
    assert rf_kernel(forest, A, B).values[0, 0] == 0.75


def test_counting_matches_brute_force():
    rng = np.random.default_rng(2)
    la = rng.integers(0, 4, size=(9, 6))
    lb = rng.integers(0, 4, size=(5, 6))
    brute = (la[:, None, :] == lb[None, :, :]).sum(axis=2)
    np.testing.assert_array_equal(co_terminal_counts(la, lb), brute)
    self_brute = (la[:, None, :] == la[None, :, :]).sum(axis=2)
    np.testing.assert_array_equal(co_terminal_counts(la), self_brute)


def test_rf_kernel_symmetric_unit_diagonal_multiples_of_one_over_m():
    rng = np.random.default_rng(3)
    X = rng.random((50, 4))
    forest = fit_forest(X, X[:, 0] + X[:, 1], n_trees=37, seed=5)
    K = rf_kernel(forest, X).values
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)
    counts = K * 37
    np.testing.assert_array_equal(counts, np.round(counts))
    assert K.min() >= 0 and K.max() <= 1


def test_laplace_examples():
    A = np.array([[0.0, 0.0]])
    assert laplace_kernel(A, A.copy()).values[0, 0] == 1.0
    B = np.array([[math.log(2) / 2, math.log(2) / 2]])
    assert laplace_kernel(A, B, sigma=1.0).values[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_laplace_l2_metric():
    A = np.array([[0.0, 0.0]])
    B = np.array([[3.0, 4.0]])
    assert laplace_kernel(A, B, sigma=5.0, metric="l2").values[0, 0] == pytest.approx(math.exp(-1))


def test_laplace_large_sigma_tends_to_one_monotonically():
    rng = np.random.default_rng(4)
    A, B = rng.random((3, 4)), rng.random((2, 4))
    prev = laplace_kernel(A, B, sigma=0.1).values
    for sigma in (1, 10, 100, 1e6):
        cur = laplace_kernel(A, B, sigma=sigma).values
        assert np.all(cur >= prev)
        prev = cur
    assert np.allclose(prev, 1.0, atol=1e-5)


def test_laplace_rejects_bad_sigma():
    with pytest.raises(NonPositiveSigma):
        laplace_kernel(np.zeros((2, 2)), sigma=0)


def test_laplace_self_kernel_symmetric_unit_diagonal():
    X = np.random.default_rng(5).random((20, 3))
    K = laplace_kernel(X).values
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)


def test_mantel_identity_and_affine():
    rng = np.random.default_rng(6)
    M = rng.random((6, 6))
    K1 = (M + M.T) / 2
    assert mantel_statistic(K1, K1) == pytest.approx(1.0)
    K2 = 3.0 * K1 + 2.0
    assert mantel_statistic(K1, K2) == pytest.approx(1.0)


def test_mantel_three_by_three_by_hand():
    K1 = np.array([[1, 0.2, 0.5], [0.2, 1, 0.9], [0.5, 0.9, 1]])
    K2 = np.array([[1, 0.1, 0.7], [0.1, 1, 0.3], [0.7, 0.3, 1]])
    a = [0.2, 0.5, 0.9]  # lower triangle, row-major: (1,0), (2,0), (2,1)
    b = [0.1, 0.7, 0.3]
    ma, mb = sum(a) / 3, sum(b) / 3
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    assert mantel_statistic(K1, K2) == pytest.approx(num / den, abs=1e-14)


def test_mantel_errors():
    with pytest.raises(ShapeMismatch):
        mantel_statistic(np.eye(3), np.eye(4))
    with pytest.raises(ZeroVariance):
        mantel_statistic(np.ones((4, 4)), np.random.rand(4, 4))


@settings(max_examples=40, deadline=None)
@given(arrays(float, (7, 7), elements=st.floats(0, 1)), st.randoms(use_true_random=False))
def test_mantel_permutation_invariant(M, rnd):
    K1 = (M + M.T) / 2
    K2 = np.sqrt(K1)
    try:
        ref = mantel_statistic(K1, K2)
    except ZeroVariance:
        return
    perm = list(range(7))
    rnd.shuffle(perm)
    perm = np.array(perm)
    val = mantel_statistic(K1[np.ix_(perm, perm)], K2[np.ix_(perm, perm)])
    assert val == pytest.approx(ref, abs=1e-9)
    assert -1 <= val <= 1


@settings(max_examples=30, deadline=None)
@given(arrays(float, (5, 3), elements=st.floats(-10, 10)), arrays(float, (4, 3), elements=st.floats(-10, 10)))
def test_laplace_exchange_symmetry(A, B):
    np.testing.assert_allclose(laplace_kernel(A, B).values, laplace_kernel(B, A).values.T)


def test_histogram_same_labels_and_identity():
    K = np.eye(5)
    h = kernel_value_histogram(K, np.zeros(5))
    assert h.cross_class.sum() == 0
    assert h.same_class.sum() == 10
    h = kernel_value_histogram(K, np.array([0, 0, 1, 1, 1]))
    assert h.same_class[0] == h.same_class.sum() == 4
    assert h.cross_class.sum() == 6


def test_histogram_rf_kernel_on_separated_blobs():
    X, labels = _blobs()
    forest = fit_forest(X, labels, n_trees=100, seed=1, target_kind="multiclass")
    K = rf_kernel(forest, X)
    h = kernel_value_histogram(K, labels)
    assert np.argmax(h.cross_class) == 0
    # same-class mass sits mostly in the upper half of the value range
    assert h.same_class[10:].sum() > h.same_class[:10].sum()
    # direct look at the values themselves
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(labels), dtype=bool)
    assert np.median(K.values[same & off]) > 0.5
    assert np.median(K.values[~same]) < 0.05


def test_histogram_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        kernel_value_histogram(np.eye(3), [0, 1])


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_kernel_io_round_trip(tmp_path, fmt):
    K = KernelMatrix.from_array(np.random.default_rng(7).random((4, 3)), kind="custom")
    path = tmp_path / f"k.{fmt}"
    write_kernel(K, path, fmt=fmt)
    back = read_kernel(path)
    np.testing.assert_array_equal(back.values, K.values)


def test_binary_layout(tmp_path):
    K = KernelMatrix.from_array(np.array([[1.0, 0.5]]))
    path = tmp_path / "k.bin"
    write_kernel(K, path, fmt="bin")
    raw = path.read_bytes()
    assert raw[:8] == b"RFKMAT01"
    assert int.from_bytes(raw[8:16], "little") == 1
    assert int.from_bytes(raw[16:24], "little") == 2
    assert np.frombuffer(raw[24:], "<f8").tolist() == [1.0, 0.5]
