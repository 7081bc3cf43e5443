"""Random forests grown from scratch for continuous, binary and survival targets.

The forest is mainly used as a kernel generator: :func:`terminal_leaf_ids`
gives, for every row and tree, the leaf the row falls into. The ensemble
prediction is kept as the baseline the kernel methods are compared against.

Split criteria are variance reduction (continuous), Gini decrease (binary
or multiclass) and the log-rank statistic (survival). Candidate thresholds
are midpoints between consecutive distinct feature values; ``x <= t`` goes
left.
"""

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import _tree
from .data import SurvivalData, as_labels
from .errors import AllCensored, DataError, DimensionMismatch, EmptyData

FORMAT_VERSION = "rfkernel.forest/1"

_KIND_CODES = {
    "continuous": _tree.REGRESSION,
    "binary": _tree.CLASSIFICATION,
    "multiclass": _tree.CLASSIFICATION,
    "survival": _tree.SURVIVAL,
}

# ranger / cforest style node-size defaults
_DEFAULT_NODE_SIZE = {"continuous": 5, "binary": 1, "multiclass": 1}
_DEFAULT_NODE_WEIGHT = 7.0
_UNBOUNDED_DEPTH = 2**31 - 1
MTRY_RULES = ("sqrt", "third")


@dataclass(frozen=True)
class TreeParams:
    """Tree growing parameters; ``None`` fields take target-specific defaults.

    ``min_node_size`` bounds the bootstrap row count of every leaf for
    continuous and binary targets, ``min_node_weight`` does the same for
    survival trees. When ``mtry`` is ``None`` it follows ``mtry_rule``:
    ``"sqrt"`` gives ``floor(sqrt(p))`` for every target kind (the ranger
    default), ``"third"`` gives ``floor(p / 3)`` for continuous targets and
    ``floor(sqrt(p))`` otherwise (the randomForest default).
    """

    mtry: int | None = None
    min_node_size: int | None = None
    min_node_weight: float | None = None
    max_depth: int | None = None
    bootstrap_fraction: float = 1.0
    mtry_rule: str = "sqrt"

    def resolve(self, target_kind, p):
        if target_kind not in _KIND_CODES:
            raise DataError(f"unknown target kind {target_kind!r}")
        mtry = self.mtry
        if mtry is None:
            if self.mtry_rule not in MTRY_RULES:
                raise DataError(f"mtry_rule must be one of {MTRY_RULES}, got {self.mtry_rule!r}")
            if self.mtry_rule == "third" and target_kind == "continuous":
                mtry = p // 3
            else:
                mtry = int(math.isqrt(p))
            mtry = max(1, mtry)
        if not 1 <= mtry <= p:
            raise DataError(f"mtry must be in [1, {p}], got {mtry}")
        size = self.min_node_size
        weight = self.min_node_weight
        if target_kind == "survival":
            weight = _DEFAULT_NODE_WEIGHT if weight is None else float(weight)
            if weight <= 0:
                raise DataError("min_node_weight must be positive")
        else:
            size = _DEFAULT_NODE_SIZE[target_kind] if size is None else int(size)
            if size < 1:
                raise DataError("min_node_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise DataError("max_depth must be positive")
        if not 0 < self.bootstrap_fraction <= 1:
            raise DataError("bootstrap_fraction must be in (0, 1]")
        return replace(self, mtry=mtry, min_node_size=size, min_node_weight=weight)

    def doubled(self):
        """Same parameters with the terminal-node minimum doubled."""
        size = None if self.min_node_size is None else 2 * self.min_node_size
        weight = None if self.min_node_weight is None else 2 * self.min_node_weight
        return replace(self, min_node_size=size, min_node_weight=weight)


def default_params(target_kind, node_size_multiplier=1, mtry_rule="sqrt"):
    """Default ``TreeParams`` with the terminal node minimum scaled."""
    if target_kind == "survival":
        return TreeParams(min_node_weight=_DEFAULT_NODE_WEIGHT * node_size_multiplier,
                          mtry_rule=mtry_rule)
    return TreeParams(min_node_size=_DEFAULT_NODE_SIZE[target_kind] * node_size_multiplier,
                      mtry_rule=mtry_rule)


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_id: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    bootstrap_indices: np.ndarray

    @classmethod
    def from_nodes(cls, feature, threshold, left, right, value, bootstrap_indices=()):
        """Build a tree from node arrays; leaves have ``feature == -1``."""
        feature = np.asarray(feature, dtype=np.int32)
        left = np.asarray(left, dtype=np.int32)
        right = np.asarray(right, dtype=np.int32)
        return cls(feature, np.asarray(threshold, dtype=float), left, right,
                   _dense_leaf_ids(feature), np.asarray(value, dtype=float),
                   _node_depths(left, right), np.asarray(bootstrap_indices, dtype=np.int64))

    @property
    def n_leaves(self):
        return int(np.count_nonzero(self.feature == -1))

    @property
    def max_depth(self):
        return int(self.depth.max())

    def _packed(self):
        return np.array([0, self.feature.size], dtype=np.int64)

    def apply(self, X):
        X = _check_matrix(X)
        return _tree.route(X, self.feature, self.threshold, self.left, self.right,
                           self.leaf_id, self._packed())[:, 0]

    def predict(self, X):
        X = _check_matrix(X)
        return _tree.route_values(X, self.feature, self.threshold, self.left, self.right,
                                  self.value, self._packed())[:, 0]

    def leaf_values(self):
        """Leaf predictions indexed by leaf id."""
        out = np.empty(self.n_leaves)
        mask = self.feature == -1
        out[self.leaf_id[mask]] = self.value[mask]
        return out


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    params: TreeParams
    target_kind: str
    n_features: int
    seed: int

    @property
    def n_trees(self):
        return len(self.trees)

    @cached_property
    def _packed(self):
        sizes = [t.feature.size for t in self.trees]
        offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(sizes)
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])
        return (cat("feature"), cat("threshold"), cat("left"), cat("right"),
                cat("leaf_id"), cat("value"), offsets)

    def to_dict(self):
        return {
            "format": FORMAT_VERSION,
            "target_kind": self.target_kind,
            "n_features": self.n_features,
            "seed": self.seed,
            "params": {
                "mtry": self.params.mtry,
                "min_node_size": self.params.min_node_size,
                "min_node_weight": self.params.min_node_weight,
                "max_depth": self.params.max_depth,
                "bootstrap_fraction": self.params.bootstrap_fraction,
                "mtry_rule": self.params.mtry_rule,
            },
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                    "bootstrap_indices": t.bootstrap_indices.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != FORMAT_VERSION:
            raise DataError(f"unsupported forest format {doc.get('format')!r}")
        trees = []
        for t in doc["trees"]:
            feature = np.asarray(t["feature"], dtype=np.int32)
            left = np.asarray(t["left"], dtype=np.int32)
            right = np.asarray(t["right"], dtype=np.int32)
            trees.append(Tree(
                feature=feature,
                threshold=np.asarray(t["threshold"], dtype=float),
                left=left,
                right=right,
                leaf_id=_dense_leaf_ids(feature),
                value=np.asarray(t["value"], dtype=float),
                depth=_node_depths(left, right),
                bootstrap_indices=np.asarray(t["bootstrap_indices"], dtype=np.int64),
            ))
        return cls(trees=tuple(trees), params=TreeParams(**doc["params"]),
                   target_kind=doc["target_kind"], n_features=int(doc["n_features"]),
                   seed=int(doc["seed"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _dense_leaf_ids(feature):
    ids = np.full(feature.size, -1, dtype=np.int32)
    leaves = np.flatnonzero(feature == -1)
    ids[leaves] = np.arange(leaves.size, dtype=np.int32)
    return ids


def _node_depths(left, right):
    depth = np.zeros(left.size, dtype=np.int32)
    for i in range(left.size):
        if left[i] >= 0:
            depth[left[i]] = depth[i] + 1
            depth[right[i]] = depth[i] + 1
    return depth


def _check_matrix(X, p=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d feature matrix, got shape {X.shape}")
    if p is not None and X.shape[1] != p:
        raise DimensionMismatch(f"forest was fit on {p} features, got {X.shape[1]}")
    if np.isnan(X).any():
        raise DataError("missing values in feature matrix")
    return X


def _prepare(X, target, target_kind):
    X = _check_matrix(X)
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyData("feature matrix is empty")
    if isinstance(target, SurvivalData):
        target_kind = "survival"
    if target_kind is None:
        target_kind = "continuous"
    if target_kind == "survival":
        if not isinstance(target, SurvivalData):
            raise DataError("survival targets must be given as SurvivalData")
        y, event = target.time, target.event
        if event.sum() == 0:
            raise AllCensored("no events (all rows censored)")
    elif target_kind == "binary":
        y = (as_labels(target) > 0).astype(float)
        event = np.zeros(0)
    elif target_kind == "multiclass":
        # arbitrary class labels, coded 0..K-1 in sorted order
        _, codes = np.unique(np.asarray(target).ravel(), return_inverse=True)
        y = codes.astype(float)
        event = np.zeros(0)
    elif target_kind == "continuous":
        y = np.asarray(target, dtype=float).ravel()
        event = np.zeros(0)
        if not np.all(np.isfinite(y)):
            raise DataError("continuous target has non-finite values")
    else:
        raise DataError(f"unknown target kind {target_kind!r}")
    if y.size != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {y.size} targets")
    return X, np.ascontiguousarray(y), np.ascontiguousarray(event), target_kind


def tree_seed(seed, index):
    """Per-tree random state; depends only on (forest seed, tree index)."""
    return int(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)]).generate_state(1)[0])


def _grow(X, y, event, target_kind, params, seed):
    n_boot = max(1, int(round(params.bootstrap_fraction * X.shape[0])))
    depth = _UNBOUNDED_DEPTH if params.max_depth is None else int(params.max_depth)
    if target_kind == "survival":
        min_leaf = max(1, math.ceil(params.min_node_weight))
    else:
        min_leaf = int(params.min_node_size)
    parts = _tree.grow_tree(X, y, event, _KIND_CODES[target_kind], n_boot,
                            int(params.mtry), int(min_leaf), depth, np.uint32(seed))
    feature, threshold, left, right, leaf_id, value, depths, boot = parts
    return Tree(feature, threshold, left, right, leaf_id, value, depths, boot)


def fit_tree(X, target, params=None, seed=0, target_kind=None):
    """Grow a single tree on a bootstrap sample of ``(X, target)``."""
    X, y, event, kind = _prepare(X, target, target_kind)
    params = (params or TreeParams()).resolve(kind, X.shape[1])
    return _grow(X, y, event, kind, params, tree_seed(seed, 0))


def fit_forest(X, target, params=None, n_trees=500, seed=0, target_kind=None):
    """Grow ``n_trees`` independently randomised trees.

    Tree ``m`` draws its bootstrap sample and candidate features from a
    random state derived from ``(seed, m)`` only, so the result does not
    depend on the order in which trees are grown.
    """
    if n_trees < 1:
        raise DataError("n_trees must be >= 1")
    X, y, event, kind = _prepare(X, target, target_kind)
    params = (params or TreeParams()).resolve(kind, X.shape[1])
    trees = tuple(_grow(X, y, event, kind, params, tree_seed(seed, m)) for m in range(n_trees))
    return Forest(trees=trees, params=params, target_kind=kind,
                  n_features=X.shape[1], seed=int(seed))


def _tree_values(forest, X):
    X = _check_matrix(X, forest.n_features)
    feature, threshold, left, right, _, value, offsets = forest._packed
    return _tree.route_values(X, feature, threshold, left, right, value, offsets)


def predict_forest(forest, X):
    """Mean over trees of the leaf predictions.

    Continuous: mean response. Binary: fraction of votes for +1.
    Survival: leaf event rate (events per unit follow-up), a risk score.
    Multiclass forests only generate kernels and have no prediction.
    """
    if forest.target_kind == "multiclass":
        raise DataError("multiclass forests are kernel generators only")
    return _tree_values(forest, X).mean(axis=1)


def predict_labels(forest, X):
    """Binary forests only: +1 where the vote fraction is at least 0.5."""
    if forest.target_kind != "binary":
        raise DataError("predict_labels needs a binary forest")
    return np.where(predict_forest(forest, X) >= 0.5, 1.0, -1.0)


def oob_predict(forest, X):
    """Out-of-bag predictions for the training rows ``X``.

    Rows that were in every bootstrap sample get NaN.
    """
    values = _tree_values(forest, X)
    n = values.shape[0]
    in_bag = np.zeros((n, forest.n_trees), dtype=bool)
    for m, tree in enumerate(forest.trees):
        if tree.bootstrap_indices.max() >= n:
            raise DimensionMismatch("X is not the training matrix of this forest")
        in_bag[tree.bootstrap_indices, m] = True
    oob = ~in_bag
    counts = oob.sum(axis=1)
    sums = np.where(oob, values, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def terminal_leaf_ids(forest, X):
    """Leaf id reached by each row in each tree, shape ``(rows, n_trees)``."""
    X = _check_matrix(X, forest.n_features)
    feature, threshold, left, right, leaf_id, _, offsets = forest._packed
    return _tree.route(X, feature, threshold, left, right, leaf_id, offsets)
