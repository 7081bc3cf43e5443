"""RF proximity kernel, Laplace kernel and kernel comparison tools."""

import csv
import struct
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, NonPositiveSigma, ShapeMismatch, ZeroVariance
from .forest import terminal_leaf_ids

KINDS = ("rf", "laplace", "custom")

BINARY_MAGIC = b"RFKMAT01"
_HEADER = struct.Struct("<8sQQ")


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense similarity matrix between row samples and column samples."""

    values: np.ndarray
    row_ids: np.ndarray
    col_ids: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeMismatch(f"kernel must be 2-d, got shape {values.shape}")
        row_ids = np.arange(values.shape[0]) if self.row_ids is None else np.asarray(self.row_ids)
        col_ids = np.arange(values.shape[1]) if self.col_ids is None else np.asarray(self.col_ids)
        if row_ids.size != values.shape[0] or col_ids.size != values.shape[1]:
            raise ShapeMismatch("id vectors do not match the kernel shape")
        if self.kind not in KINDS:
            raise DataError(f"unknown kernel kind {self.kind!r}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "col_ids", col_ids)

    @classmethod
    def from_array(cls, values, kind="custom", row_ids=None, col_ids=None):
        values = np.asarray(values, dtype=float)
        if row_ids is None:
            row_ids = np.arange(values.shape[0])
        if col_ids is None:
            col_ids = row_ids if values.shape[0] == values.shape[1] else np.arange(values.shape[1])
        return cls(values, row_ids, col_ids, kind)

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_square(self):
        return self.values.shape[0] == self.values.shape[1] and np.array_equal(self.row_ids, self.col_ids)


def _as_kernel(K):
    if isinstance(K, KernelMatrix):
        return K
    return KernelMatrix.from_array(K)


@nb.njit(cache=True)
def _count_self(leaves):
    n, n_trees = leaves.shape
    counts = np.zeros((n, n), dtype=np.int32)
    for t in range(n_trees):
        col = leaves[:, t]
        n_leaf = col.max() + 1
        start = np.zeros(n_leaf + 1, dtype=np.int64)
        for i in range(n):
            start[col[i] + 1] += 1
        for k in range(n_leaf):
            start[k + 1] += start[k]
        fill = start[:-1].copy()
        members = np.empty(n, dtype=np.int64)
        for i in range(n):
            members[fill[col[i]]] = i
            fill[col[i]] += 1
        for k in range(n_leaf):
            for a in range(start[k], start[k + 1]):
                ia = members[a]
                for b in range(start[k], start[k + 1]):
                    counts[ia, members[b]] += 1
    return counts


@nb.njit(cache=True)
def _count_cross(leaves_a, leaves_b):
    na, n_trees = leaves_a.shape
    nb_ = leaves_b.shape[0]
    counts = np.zeros((na, nb_), dtype=np.int32)
    for t in range(n_trees):
        cb = leaves_b[:, t]
        ca = leaves_a[:, t]
        n_leaf = max(cb.max(), ca.max()) + 1
        start = np.zeros(n_leaf + 1, dtype=np.int64)
        for j in range(nb_):
            start[cb[j] + 1] += 1
        for k in range(n_leaf):
            start[k + 1] += start[k]
        fill = start[:-1].copy()
        members = np.empty(nb_, dtype=np.int64)
        for j in range(nb_):
            members[fill[cb[j]]] = j
            fill[cb[j]] += 1
        for i in range(na):
            leaf = ca[i]
            for b in range(start[leaf], start[leaf + 1]):
                counts[i, members[b]] += 1
    return counts


def co_terminal_counts(leaves_a, leaves_b=None):
    """Number of trees in which each (row, column) pair shares a leaf."""
    leaves_a = np.ascontiguousarray(leaves_a, dtype=np.int32)
    if leaves_b is None:
        return _count_self(leaves_a)
    leaves_b = np.ascontiguousarray(leaves_b, dtype=np.int32)
    if leaves_a.shape[1] != leaves_b.shape[1]:
        raise ShapeMismatch("leaf id matrices come from different forests")
    return _count_cross(leaves_a, leaves_b)


def rf_kernel(forest, A, B=None, row_ids=None, col_ids=None):
    """Fraction of trees in which rows of ``A`` and ``B`` land in the same leaf.

    With ``B`` omitted (or ``B is A``) the train-by-train kernel is built;
    it is exactly symmetric with a unit diagonal.
    """
    leaves_a = terminal_leaf_ids(forest, A)
    if B is None or B is A:
        counts = co_terminal_counts(leaves_a)
        col_ids = row_ids
    else:
        counts = co_terminal_counts(leaves_a, terminal_leaf_ids(forest, B))
    values = counts / float(forest.n_trees)
    return KernelMatrix.from_array(values, "rf", row_ids, col_ids)


def laplace_kernel(A, B=None, sigma=1.0, metric="l1", row_ids=None, col_ids=None):
    """``exp(-||a - b|| / sigma)`` with the L1 norm (``metric="l2"`` for Euclidean)."""
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    same = B is None or B is A
    B = A if same else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatch(f"{A.shape[1]} vs {B.shape[1]} features")
    names = {"l1": "cityblock", "l2": "euclidean"}
    if metric not in names:
        raise DataError(f"metric must be 'l1' or 'l2', got {metric!r}")
    dist = cdist(A, B, names[metric])
    if same:
        dist = 0.5 * (dist + dist.T)
        np.fill_diagonal(dist, 0.0)
        col_ids = row_ids
    return KernelMatrix.from_array(np.exp(-dist / sigma), "laplace", row_ids, col_ids)


def _lower_triangle(K):
    rows, cols = np.tril_indices(K.shape[0], k=-1)
    return K.values[rows, cols]


def mantel_statistic(K1, K2):
    """Pearson correlation between the strictly lower triangles of two kernels."""
    K1, K2 = _as_kernel(K1), _as_kernel(K2)
    if K1.shape != K2.shape or K1.shape[0] != K1.shape[1]:
        raise ShapeMismatch(f"need two square kernels of equal size, got {K1.shape} and {K2.shape}")
    if not np.array_equal(K1.row_ids, K2.row_ids):
        raise ShapeMismatch("kernels index different samples")
    if K1.shape[0] < 3:
        raise ShapeMismatch("need at least 3 samples (3 off-diagonal pairs)")
    a = _lower_triangle(K1)
    b = _lower_triangle(K2)
    a = a - a.mean()
    b = b - b.mean()
    na = np.sqrt(a @ a)
    nb_ = np.sqrt(b @ b)
    if na == 0 or nb_ == 0:
        raise ZeroVariance("kernel is constant off the diagonal")
    return float(np.clip((a @ b) / (na * nb_), -1.0, 1.0))


@dataclass(frozen=True)
class KernelHistogram:
    edges: np.ndarray
    same_class: np.ndarray
    cross_class: np.ndarray


def kernel_value_histogram(K, labels, bins=20, value_range=(0.0, 1.0)):
    """Histogram off-diagonal kernel values split by whether the pair shares a label.

    Each unordered pair is counted once.
    """
    K = _as_kernel(K)
    labels = np.asarray(labels).ravel()
    if K.shape[0] != K.shape[1] or labels.size != K.shape[0]:
        raise ShapeMismatch(f"kernel {K.shape} does not match {labels.size} labels")
    rows, cols = np.tril_indices(K.shape[0], k=-1)
    vals = K.values[rows, cols]
    same = labels[rows] == labels[cols]
    edges = np.linspace(value_range[0], value_range[1], bins + 1)
    same_counts, _ = np.histogram(vals[same], bins=edges)
    cross_counts, _ = np.histogram(vals[~same], bins=edges)
    return KernelHistogram(edges, same_counts, cross_counts)


def write_kernel(K, path, fmt="csv"):
    """Write a kernel as CSV (ids in header / first column) or raw binary.

    Binary layout: 8 magic bytes ``RFKMAT01``, uint64 rows, uint64 cols
    (little endian), then rows*cols float64 values in row-major order.
    Ids are not stored in the binary format.
    """
    K = _as_kernel(K)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id"] + [str(c) for c in K.col_ids])
            for rid, row in zip(K.row_ids, K.values):
                w.writerow([str(rid)] + [repr(float(v)) for v in row])
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BINARY_MAGIC, K.shape[0], K.shape[1]))
            fh.write(np.ascontiguousarray(K.values, dtype="<f8").tobytes())
    else:
        raise DataError(f"unknown kernel format {fmt!r}")


def read_kernel(path, fmt=None, kind="custom"):
    if fmt is None:
        with open(path, "rb") as fh:
            fmt = "bin" if fh.read(8) == BINARY_MAGIC else "csv"
    if fmt == "bin":
        with open(path, "rb") as fh:
            magic, r, c = _HEADER.unpack(fh.read(_HEADER.size))
            if magic != BINARY_MAGIC:
                raise DataError("not a binary kernel file")
            values = np.frombuffer(fh.read(), dtype="<f8")
        if values.size != r * c:
            raise DataError(f"expected {r * c} values, found {values.size}")
        return KernelMatrix.from_array(values.reshape(r, c).copy(), kind)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    col_ids = np.asarray(rows[0][1:])
    row_ids = np.asarray([r[0] for r in rows[1:]])
    values = np.asarray([[float(v) for v in r[1:]] for r in rows[1:]])
    return KernelMatrix(values, row_ids, col_ids, kind)
