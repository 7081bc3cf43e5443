from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeMismatch

TARGET_KINDS = ("continuous", "binary", "survival")


@dataclass(frozen=True)
class SurvivalData:
    """Right-censored outcomes: observed time and event indicator (1 = event)."""

    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float).ravel()
        event = np.asarray(self.event, dtype=float).ravel()
        if time.shape != event.shape:
            raise ShapeMismatch(f"time has {time.size} entries, event has {event.size}")
        if np.any(~np.isfinite(time)) or np.any(time <= 0):
            raise DataError("survival times must be finite and strictly positive")
        if np.any((event != 0) & (event != 1)):
            raise DataError("event indicator must be 0 or 1")
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)

    def __len__(self):
        return self.time.size

    def subset(self, rows):
        return SurvivalData(self.time[rows], self.event[rows])


def as_labels(y):
    """Validate a {-1, +1} label vector."""
    from .errors import InvalidLabel

    y = np.asarray(y, dtype=float).ravel()
    bad = (y != 1) & (y != -1)
    if np.any(bad):
        raise InvalidLabel(f"labels must be -1 or +1, got {np.unique(y[bad])[:5]}")
    return y
