"""Kernel ridge regression on a precomputed kernel."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import FactorizationFailure, LadderExhausted, ShapeMismatch
from .kernels import _as_kernel

LADDER_BASE = 1e-8
LADDER_DOUBLINGS = 64


@dataclass(frozen=True, eq=False)
class KrrModel:
    alpha: np.ndarray
    lam: float
    train_ids: np.ndarray


def _factorizes(A):
    try:
        cho_factor(A, lower=True, check_finite=False)
    except LinAlgError:
        return False
    return True


def _shifted(K, lam):
    A = K.copy()
    A[np.diag_indices_from(A)] += lam
    return A


def lambda_ladder(K):
    """First rung ``1e-8 * mean(diag K)``; later rungs double it."""
    values = _as_kernel(K).values
    scale = float(np.mean(np.diag(values)))
    lam0 = LADDER_BASE * scale if scale > 0 else LADDER_BASE
    return lam0 * 2.0 ** np.arange(LADDER_DOUBLINGS + 1)


def select_lambda(K):
    """Smallest ladder value for which ``K + lambda I`` has a Cholesky factor.

    Success is monotone in lambda (K + lambda I is positive definite for
    every lambda above -min eig K), so the ladder is bisected rather than
    walked rung by rung.
    """
    K = _as_kernel(K)
    if K.shape[0] != K.shape[1]:
        raise ShapeMismatch(f"kernel must be square, got {K.shape}")
    values = K.values
    ladder = lambda_ladder(K)
    if _factorizes(_shifted(values, ladder[0])):
        return float(ladder[0])
    hi = len(ladder) - 1
    if not _factorizes(_shifted(values, ladder[hi])):
        raise LadderExhausted(f"K + lambda I not factorizable up to lambda={ladder[hi]:.3g}")
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _factorizes(_shifted(values, ladder[mid])):
            hi = mid
        else:
            lo = mid
    return float(ladder[hi])


def fit_krr(K, y, lam=None):
    """Solve ``(K + lam I) alpha = y`` by Cholesky; ``lam=None`` uses :func:`select_lambda`."""
    K = _as_kernel(K)
    y = np.asarray(y, dtype=float).ravel()
    n = K.shape[0]
    if K.shape[1] != n:
        raise ShapeMismatch(f"kernel must be square, got {K.shape}")
    if y.size != n:
        raise ShapeMismatch(f"kernel has {n} rows but y has {y.size} entries")
    if lam is None:
        lam = select_lambda(K)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    A = _shifted(K.values, lam)
    try:
        factor = cho_factor(A, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise FactorizationFailure(f"K + {lam:.3g} I is not positive definite") from exc
    alpha = cho_solve(factor, y, check_finite=False)
    tol = 1e-8 * (1.0 + np.max(np.abs(y)))
    resid = A @ alpha - y
    if np.max(np.abs(resid)) > tol:
        # one step of iterative refinement
        alpha = alpha - cho_solve(factor, resid, check_finite=False)
        resid = A @ alpha - y
    if not np.all(np.isfinite(alpha)) or np.max(np.abs(resid)) > tol:
        raise FactorizationFailure(
            f"solve residual {np.max(np.abs(resid)):.3g} exceeds {tol:.3g} at lambda={lam:.3g}")
    return KrrModel(alpha=alpha, lam=float(lam), train_ids=K.row_ids)


def residual(K, model, y):
    """Infinity norm of ``(K + lam I) alpha - y``."""
    A = _shifted(_as_kernel(K).values, model.lam)
    return float(np.max(np.abs(A @ model.alpha - np.asarray(y, dtype=float))))


def predict_krr(model, K_cross):
    """Kernel-weighted sum of the dual coefficients for each test row."""
    values = _as_kernel(K_cross).values
    if values.shape[1] != model.alpha.size:
        raise ShapeMismatch(f"cross kernel has {values.shape[1]} columns, model has {model.alpha.size}")
    return values @ model.alpha


def classify_krr(model, K_cross):
    """Sign of the KRR score; a score of exactly 0 maps to +1."""
    return np.where(predict_krr(model, K_cross) < 0, -1.0, 1.0)
