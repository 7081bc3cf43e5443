import json

import numpy as np
import pytest

from rfkernel import simgen
from rfkernel.data import SurvivalData
from rfkernel.errors import AllCensored, DataError, DimensionMismatch, EmptyData
from rfkernel.forest import (
    Forest,
    Tree,
    TreeParams,
    default_params,
    fit_forest,
    fit_tree,
    oob_predict,
    predict_forest,
    predict_labels,
    terminal_leaf_ids,
    tree_seed,
)


def _friedman(n, p=10, seed=0):
    rng = np.random.default_rng(seed)
    X = simgen.gen_features("friedman", n, p, rng)
    return X, simgen.make_continuous("friedman", X, rng).target


def _single_leaf(value):
    return Tree.from_nodes([-1], [0.0], [-1], [-1], [value])


def _walk(tree, x):
    """Plain-python routing, used as an oracle for the numba router."""
    node = 0
    while tree.feature[node] != -1:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return tree.leaf_id[node]


def test_separable_split_gives_one_root_split():
    X = np.array([[0.1, 5.0], [0.2, 1.0], [0.3, 4.0], [0.4, 2.0],
                  [0.6, 3.0], [0.7, 8.0], [0.8, 6.0], [0.9, 7.0]])
    y = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0])
    params = TreeParams(mtry=2, min_node_size=1, bootstrap_fraction=1.0)
    # a bootstrap sample may miss a class entirely, so grow several trees
    # and check those that saw both
    forest = fit_forest(X, y, params, n_trees=20, seed=3)
    checked = 0
    for tree in forest.trees:
        seen = y[tree.bootstrap_indices]
        if seen.min() == seen.max():
            continue
        assert tree.feature[0] == 0
        x0 = X[tree.bootstrap_indices, 0]
        assert x0[seen == 0].max() <= tree.threshold[0] < x0[seen == 1].min()
        assert tree.n_leaves == 2
        assert sorted(tree.leaf_values()) == [0.0, 1.0]
        checked += 1
    assert checked > 10


def test_constant_target_single_leaf():
    X = np.random.default_rng(1).random((30, 4))
    tree = fit_tree(X, np.full(30, 3.0))
    assert tree.n_leaves == 1
    np.testing.assert_array_equal(tree.predict(X), 3.0)


def test_oob_mse_below_target_variance():
    X, y = _friedman(200)
    forest = fit_forest(X, y, n_trees=200, seed=11)
    oob = oob_predict(forest, X)
    ok = ~np.isnan(oob)
    assert np.mean((oob[ok] - y[ok]) ** 2) < np.var(y)


def test_forest_of_one_matches_tree():
    X, y = _friedman(80)
    forest = fit_forest(X, y, n_trees=1, seed=5)
    tree = fit_tree(X, y, seed=5)
    np.testing.assert_array_equal(predict_forest(forest, X), tree.predict(X))


def test_same_seed_same_forest():
    X, y = _friedman(100)
    a = fit_forest(X, y, n_trees=10, seed=42)
    b = fit_forest(X, y, n_trees=10, seed=42)
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.feature, tb.feature)
        np.testing.assert_array_equal(ta.threshold, tb.threshold)
        np.testing.assert_array_equal(ta.bootstrap_indices, tb.bootstrap_indices)
    np.testing.assert_array_equal(predict_forest(a, X), predict_forest(b, X))


def test_tree_random_state_depends_only_on_index():
    X, y = _friedman(60)
    big = fit_forest(X, y, n_trees=6, seed=9)
    small = fit_forest(X, y, n_trees=3, seed=9)
    for m in range(3):
        np.testing.assert_array_equal(big.trees[m].threshold, small.trees[m].threshold)
    assert tree_seed(9, 0) != tree_seed(9, 1)


def test_predict_single_leaf_constant():
    forest = Forest((_single_leaf(2.5),), TreeParams().resolve("continuous", 3), "continuous", 3, 0)
    np.testing.assert_array_equal(predict_forest(forest, np.zeros((4, 3))), 2.5)


def test_predict_averages_trees():
    forest = Forest((_single_leaf(1.0), _single_leaf(3.0)), TreeParams().resolve("continuous", 3),
                    "continuous", 3, 0)
    assert predict_forest(forest, np.zeros((1, 3)))[0] == 2.0


def test_dimension_mismatch():
    X, y = _friedman(50)
    forest = fit_forest(X, y, n_trees=2)
    with pytest.raises(DimensionMismatch):
        predict_forest(forest, X[:, :5])
    with pytest.raises(DimensionMismatch):
        terminal_leaf_ids(forest, X[:, :5])


def test_terminal_ids_match_python_walk():
    X, y = _friedman(120)
    forest = fit_forest(X, y, n_trees=5, seed=2)
    ids = terminal_leaf_ids(forest, X)
    for m, tree in enumerate(forest.trees):
        assert ids[:, m].tolist() == [_walk(tree, x) for x in X]
        assert ids[:, m].max() < tree.n_leaves


def test_training_row_reaches_its_leaf_and_single_leaf_ids_zero():
    X, y = _friedman(60)
    forest = fit_forest(X, y, n_trees=3, seed=1)
    ids = terminal_leaf_ids(forest, X)
    assert ids.shape == (60, 3)
    one = Forest((_single_leaf(0.0),), TreeParams().resolve("continuous", 3), "continuous", 3, 0)
    np.testing.assert_array_equal(terminal_leaf_ids(one, np.random.rand(7, 3)), 0)


def test_identical_rows_identical_ids():
    X, y = _friedman(60)
    forest = fit_forest(X, y, n_trees=8)
    Z = np.vstack([X[3], X[3]])
    ids = terminal_leaf_ids(forest, Z)
    np.testing.assert_array_equal(ids[0], ids[1])


def test_leaf_ids_dense():
    X, y = _friedman(150)
    for tree in fit_forest(X, y, n_trees=4).trees:
        leaves = tree.leaf_id[tree.feature == -1]
        assert sorted(leaves.tolist()) == list(range(tree.n_leaves))


def test_min_node_size_respected():
    X, y = _friedman(150)
    params = TreeParams(min_node_size=7)
    for tree in fit_forest(X, y, params, n_trees=5, seed=4).trees:
        leaf_of_boot = np.array([_walk(tree, X[i]) for i in tree.bootstrap_indices])
        assert np.bincount(leaf_of_boot).min() >= 7


def test_survival_min_weight_respected_and_errors():
    rng = np.random.default_rng(0)
    X = rng.random((120, 5))
    data = simgen.make_survival("meier1", X, rng)
    forest = fit_forest(X, data.target, n_trees=4, seed=0)
    assert forest.target_kind == "survival"
    for tree in forest.trees:
        leaf_of_boot = np.array([_walk(tree, X[i]) for i in tree.bootstrap_indices])
        assert np.bincount(leaf_of_boot).min() >= 7
    with pytest.raises(AllCensored):
        fit_forest(X, SurvivalData(data.target.time, np.zeros(120)), n_trees=2)


def test_empty_data_and_nan():
    with pytest.raises(EmptyData):
        fit_tree(np.zeros((0, 3)), np.zeros(0))
    X = np.random.rand(10, 2)
    X[0, 0] = np.nan
    with pytest.raises(DataError):
        fit_tree(X, np.zeros(10))


def test_binary_forest_labels():
    rng = np.random.default_rng(4)
    X = rng.random((200, 3))
    y = np.where(X[:, 0] > 0.5, 1.0, -1.0)
    forest = fit_forest(X, y, n_trees=25, target_kind="binary")
    assert np.mean(predict_labels(forest, X) == y) > 0.97
    assert set(np.unique(predict_labels(forest, X))) <= {-1.0, 1.0}


def test_multiclass_forest_only_for_kernels():
    rng = np.random.default_rng(4)
    X = rng.random((60, 3))
    labels = np.array(["a", "b", "c"])[np.minimum((X[:, 0] * 3).astype(int), 2)]
    forest = fit_forest(X, labels, n_trees=5, target_kind="multiclass")
    assert terminal_leaf_ids(forest, X).shape == (60, 5)
    with pytest.raises(DataError):
        predict_forest(forest, X)


def test_mtry_defaults():
    assert TreeParams().resolve("continuous", 20).mtry == 4
    assert TreeParams(mtry_rule="third").resolve("continuous", 20).mtry == 6
    assert TreeParams(mtry_rule="third").resolve("binary", 20).mtry == 4
    assert TreeParams().resolve("survival", 40).mtry == 6
    with pytest.raises(DataError):
        TreeParams(mtry=30).resolve("continuous", 20)


def test_doubled_node_size_defaults():
    assert default_params("continuous", 2).resolve("continuous", 5).min_node_size == 10
    assert default_params("binary", 2).resolve("binary", 5).min_node_size == 2
    assert default_params("survival", 2).resolve("survival", 5).min_node_weight == 14


def test_doubling_node_size_never_deepens_a_tree():
    X, y = _friedman(300)
    base = fit_forest(X, y, default_params("continuous"), n_trees=20, seed=6)
    doubled = fit_forest(X, y, default_params("continuous", 2), n_trees=20, seed=6)
    for a, b in zip(base.trees, doubled.trees):
        np.testing.assert_array_equal(a.bootstrap_indices, b.bootstrap_indices)
        assert b.max_depth <= a.max_depth


def test_bagging_beats_single_tree_oob():
    gaps = []
    for seed in range(10):
        X, y = _friedman(400, seed=seed)
        forest = fit_forest(X, y, n_trees=100, seed=seed)
        train_mse = np.mean((predict_forest(forest, X) - y) ** 2)
        tree = forest.trees[0]
        oob = np.setdiff1d(np.arange(400), tree.bootstrap_indices)
        tree_oob = np.mean((tree.predict(X[oob]) - y[oob]) ** 2)
        gaps.append(tree_oob - train_mse)
    assert np.mean(gaps) >= 0


def test_json_round_trip(tmp_path):
    X, y = _friedman(80)
    forest = fit_forest(X, y, n_trees=3, seed=1)
    path = tmp_path / "forest.json"
    forest.save(path)
    doc = json.loads(path.read_text())
    assert doc["format"] == "rfkernel.forest/1"
    back = Forest.load(path)
    np.testing.assert_array_equal(predict_forest(back, X), predict_forest(forest, X))
    np.testing.assert_array_equal(terminal_leaf_ids(back, X), terminal_leaf_ids(forest, X))
