"""Mean squared error, classification accuracy and Harrell's C-index."""

from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np

from .data import SurvivalData, as_labels
from .errors import EmptyData, NoComparablePairs, ShapeMismatch

METRIC_NAMES = ("MSE", "Accuracy", "CIndex")


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    n_pairs_comparable: Optional[int] = None

    def __float__(self):
        return float(self.value)


def _paired(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ShapeMismatch(f"length {a.size} vs {b.size}")
    if a.size == 0:
        raise EmptyData("metric needs at least one value")
    return a, b


def mse(y_true, y_pred):
    y_true, y_pred = _paired(y_true, y_pred)
    return MetricValue("MSE", float(np.mean((y_true - y_pred) ** 2)))


def accuracy(labels_true, labels_pred):
    labels_true, labels_pred = _paired(labels_true, labels_pred)
    labels_true = as_labels(labels_true)
    labels_pred = as_labels(labels_pred)
    return MetricValue("Accuracy", float(np.mean(labels_true == labels_pred)))


@nb.njit(cache=True)
def _concordance(time, event, h, tie_credit):
    n = time.shape[0]
    comparable = 0
    concordant = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if (time[i] < time[j] and event[i] == 1.0) or (time[j] < time[i] and event[j] == 1.0):
                comparable += 1
                s = (h[j] - h[i]) * (time[i] - time[j])
                if s > 0.0:
                    concordant += 1.0
                elif h[i] == h[j]:
                    concordant += tie_credit
    return concordant, comparable


def c_index(data, h, ties="zero"):
    """Concordance between a risk score ``h`` and survival outcomes.

    Ordered pairs ``(i, j)`` are comparable when the shorter of the two times
    is an observed event; a comparable pair is concordant when the row with
    the shorter time has the larger ``h``. Each unordered comparable pair
    appears twice, which leaves the ratio unchanged. Tied scores on a
    comparable pair count 0 (``ties="zero"``) or 1/2 (``ties="half"``).
    """
    if not isinstance(data, SurvivalData):
        raise TypeError("data must be SurvivalData")
    h = np.asarray(h, dtype=float).ravel()
    if h.size != len(data):
        raise ShapeMismatch(f"{h.size} scores for {len(data)} survival rows")
    if ties not in ("zero", "half"):
        raise ValueError("ties must be 'zero' or 'half'")
    conc, comp = _concordance(data.time, data.event, h, 0.5 if ties == "half" else 0.0)
    if comp == 0:
        raise NoComparablePairs("no comparable pairs (every earlier time is censored or tied)")
    # report unordered pairs
    return MetricValue("CIndex", float(conc / comp), int(comp // 2))
