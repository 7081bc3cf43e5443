"""Survival support vector regression on a precomputed kernel.

The dual is a box-constrained quadratic in ``alpha`` and ``alpha_star``
(both in ``[0, C]``). Writing ``u = alpha - event * alpha_star`` it reads

    1/2 u' K u - u' y

so a censored row (event 0) can only pull its coefficient upwards. The
prognostic index ``K_cross u + b`` predicts survival time: larger means
longer expected survival.
"""

import logging
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from .data import SurvivalData
from .errors import NonFiniteObjective, ShapeMismatch
from .kernels import _as_kernel
from .krr import lambda_ladder, select_lambda

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SsvmModel:
    alpha: np.ndarray
    alpha_star: np.ndarray
    bias: float
    cost: float
    event: np.ndarray
    train_ids: np.ndarray
    n_iter: int = 0
    converged: bool = True
    jitter: float = 0.0
    history: np.ndarray = field(default=None, repr=False)

    @property
    def coef(self):
        """Effective kernel weights ``alpha - event * alpha_star``."""
        return self.alpha - self.event * self.alpha_star


def _check(K, data, *vectors):
    K = _as_kernel(K).values
    n = len(data)
    if K.shape != (n, n):
        raise ShapeMismatch(f"kernel {K.shape} does not match {n} survival rows")
    for v in vectors:
        if np.shape(v) != (n,):
            raise ShapeMismatch(f"coefficient vector has shape {np.shape(v)}, expected ({n},)")
    return K


def dual_objective(K, data, alpha, alpha_star):
    """Dual objective at ``(alpha, alpha_star)``."""
    alpha = np.asarray(alpha, dtype=float)
    alpha_star = np.asarray(alpha_star, dtype=float)
    K = _check(K, data, alpha, alpha_star)
    u = alpha - data.event * alpha_star
    return float(0.5 * u @ K @ u - u @ data.time)


def dual_gradient(K, data, alpha, alpha_star):
    K = _check(K, data, alpha, alpha_star)
    g = K @ (alpha - data.event * alpha_star) - data.time
    return g, -data.event * g


def _projected(g, x, upper):
    pg = g.copy()
    at_lo = x <= 0.0
    at_hi = x >= upper
    pg[at_lo] = np.minimum(g[at_lo], 0.0)
    pg[at_hi] = np.maximum(g[at_hi], 0.0)
    return pg


def kkt_violation(K, data, model):
    """Infinity norm of the projected gradient; zero exactly at a box-constrained optimum."""
    g, gs = dual_gradient(K, data, model.alpha, model.alpha_star)
    pg = _projected(g, model.alpha, model.cost)
    pgs = _projected(gs, model.alpha_star, model.cost)
    return float(max(np.max(np.abs(pg)), np.max(np.abs(pgs))))


@nb.njit(cache=True)
def _kkt(r, y, event, alpha, alpha_star, C):
    worst = 0.0
    for i in range(r.shape[0]):
        g = r[i] - y[i]
        if alpha[i] <= 0.0:
            v = min(g, 0.0)
        elif alpha[i] >= C:
            v = max(g, 0.0)
        else:
            v = g
        worst = max(worst, abs(v))
        if event[i] > 0.0:
            gs = -g
            if alpha_star[i] <= 0.0:
                v = min(gs, 0.0)
            elif alpha_star[i] >= C:
                v = max(gs, 0.0)
            else:
                v = gs
            worst = max(worst, abs(v))
    return worst


@nb.njit(cache=True)
def _coordinate_descent(K, y, event, C, tol, max_sweeps, alpha, alpha_star):
    n = y.shape[0]
    u = alpha - event * alpha_star
    r = K @ u
    history = np.empty(max_sweeps + 1)
    history[0] = 0.5 * (u @ r) - u @ y
    sweeps = 0
    kkt = _kkt(r, y, event, alpha, alpha_star, C)
    while kkt > tol and sweeps < max_sweeps:
        for i in range(n):
            kii = K[i, i]
            if kii <= 0.0:
                continue
            g = r[i] - y[i]
            new = min(max(alpha[i] - g / kii, 0.0), C)
            step = new - alpha[i]
            if step != 0.0:
                alpha[i] = new
                for k in range(n):
                    r[k] += step * K[k, i]
            if event[i] > 0.0:
                gs = y[i] - r[i]
                new = min(max(alpha_star[i] - gs / kii, 0.0), C)
                step = new - alpha_star[i]
                if step != 0.0:
                    alpha_star[i] = new
                    for k in range(n):
                        r[k] -= step * K[k, i]
        sweeps += 1
        if sweeps % 64 == 0:
            r = K @ (alpha - event * alpha_star)
        u = alpha - event * alpha_star
        history[sweeps] = 0.5 * (u @ r) - u @ y
        kkt = _kkt(r, y, event, alpha, alpha_star, C)
    return sweeps, kkt, history[: sweeps + 1]


def _face_step(K, y, event, C, alpha, alpha_star):
    """One active-set step in ``u``: minimise over the free coordinates, then line search.

    The bounded coordinates stay fixed and the free ones move towards the
    least-squares stationary point of the restricted quadratic. The step
    length is the exact minimiser of the objective along that direction,
    capped at the box, so the objective never increases. Returns the new
    ``(alpha, alpha_star)`` or ``None`` when no descent was found.
    """
    u = alpha - event * alpha_star
    lo = -C * event
    free = (u > lo) & (u < C)
    if not free.any():
        return None
    fixed = ~free
    rhs = y[free] - K[np.ix_(free, fixed)] @ u[fixed]
    target = np.linalg.lstsq(K[np.ix_(free, free)], rhs, rcond=None)[0]
    d = np.zeros_like(u)
    d[free] = target - u[free]
    g = K @ u - y
    slope = g @ d
    curve = d @ K @ d
    if not slope < 0:
        return None
    t = -slope / curve if curve > 0 else np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        room = np.where(d > 0, (C - u) / d, np.where(d < 0, (lo - u) / d, np.inf))
    t = min(t, float(room.min()))
    if not np.isfinite(t) or t <= 0:
        return None
    new = np.clip(u + t * d, lo, C)
    return np.maximum(new, 0.0), event * np.maximum(-new, 0.0)


def _cd_with_face_steps(K, y, event, C, tol, max_sweeps, alpha, alpha_star, chunk=32):
    """Coordinate descent sweeps interleaved with :func:`_face_step`.

    Plain cyclic descent crawls on rank-deficient kernels once the active
    set has settled; an exact solve on the free face finishes the job.
    """

    def objective(a, s):
        u = a - event * s
        return 0.5 * u @ K @ u - u @ y

    history = [objective(alpha, alpha_star)]
    sweeps = 0
    kkt = _kkt(K @ (alpha - event * alpha_star), y, event, alpha, alpha_star, C)
    while kkt > tol and sweeps < max_sweeps:
        done, kkt, hist = _coordinate_descent(K, y, event, C, tol, min(chunk, max_sweeps - sweeps),
                                              alpha, alpha_star)
        sweeps += done
        history.extend(hist[1:])
        if kkt <= tol or sweeps >= max_sweeps:
            break
        stepped = _face_step(K, y, event, C, alpha, alpha_star)
        if stepped is not None:
            value = objective(*stepped)
            if value <= history[-1]:
                alpha[:], alpha_star[:] = stepped
                history.append(value)
                kkt = _kkt(K @ (alpha - event * alpha_star), y, event, alpha, alpha_star, C)
    return sweeps, kkt, np.asarray(history)


def _projected_gradient(K, y, event, C, tol, max_iter, alpha, alpha_star):
    """Projected gradient with backtracking on the stacked variable."""

    def f(a, s):
        u = a - event * s
        return 0.5 * u @ K @ u - u @ y

    def grad(a, s):
        g = K @ (a - event * s) - y
        return g, -event * g

    step = 1.0 / max(np.linalg.norm(K, 2) * 2.0, 1e-300)
    history = [f(alpha, alpha_star)]
    it = 0
    g, gs = grad(alpha, alpha_star)
    kkt = max(np.abs(_projected(g, alpha, C)).max(), np.abs(_projected(gs, alpha_star, C)).max())
    while kkt > tol and it < max_iter:
        fx = history[-1]
        t = step * 4.0
        while True:
            na = np.clip(alpha - t * g, 0.0, C)
            ns = np.clip(alpha_star - t * gs, 0.0, C)
            da, ds = na - alpha, ns - alpha_star
            fn = f(na, ns)
            if fn <= fx + g @ da + gs @ ds + (da @ da + ds @ ds) / (2 * t) or t < 1e-300:
                break
            t *= 0.5
        step = t
        alpha, alpha_star = na, ns
        history.append(fn)
        it += 1
        g, gs = grad(alpha, alpha_star)
        kkt = max(np.abs(_projected(g, alpha, C)).max(), np.abs(_projected(gs, alpha_star, C)).max())
    return alpha, alpha_star, it, kkt, np.asarray(history)


def _ensure_psd(K):
    lam0 = lambda_ladder(K)[0]
    A = K.copy()
    A[np.diag_indices_from(A)] += lam0
    try:
        cho_factor(A, lower=True, check_finite=False)
        return K, 0.0
    except LinAlgError:
        lam = select_lambda(K)
        log.warning("kernel failed the PSD check; adding %.3g to the diagonal", lam)
        A = K.copy()
        A[np.diag_indices_from(A)] += lam
        return A, lam


def _bias(K, data, alpha, alpha_star, C):
    free = (alpha > 0) & (alpha < C)
    if not free.any():
        return 0.0
    u = alpha - data.event * alpha_star
    return float(np.median(data.time[free] - (K @ u)[free]))


def solve_ssvm(K, data, C=1.0, tol=None, max_iter=None, method="cd", repair=True):
    """Minimise the survival SVM dual over the box ``[0, C]``.

    ``method="cd"`` runs cyclic coordinate descent with exact one-dimensional
    box minimisation, interleaved with active-set steps on the free face
    (``max_iter`` counts sweeps); ``method="pg"`` runs
    projected gradient descent with backtracking. Both stop once the
    projected gradient falls to ``tol`` (default ``1e-6 * C``). When the
    iteration budget (default ``50 * n``) runs out the best iterate is
    returned with ``converged=False``.
    """
    if not isinstance(data, SurvivalData):
        raise TypeError("data must be SurvivalData")
    if not C > 0:
        raise ValueError("C must be positive")
    Kv = np.ascontiguousarray(_check(K, data), dtype=float)
    n = len(data)
    tol = 1e-6 * C if tol is None else float(tol)
    max_iter = 50 * n if max_iter is None else int(max_iter)
    jitter = 0.0
    if repair:
        Kv, jitter = _ensure_psd(Kv)
    y = data.time
    event = data.event
    alpha = np.zeros(n)
    alpha_star = np.zeros(n)
    if method == "cd":
        n_iter, kkt, history = _cd_with_face_steps(Kv, y, event, float(C), tol, max_iter,
                                                   alpha, alpha_star)
    elif method == "pg":
        alpha, alpha_star, n_iter, kkt, history = _projected_gradient(
            Kv, y, event, float(C), tol, max_iter, alpha, alpha_star)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.isfinite(history[-1]):
        raise NonFiniteObjective("dual objective became non-finite")
    converged = kkt <= tol
    if not converged:
        log.warning("SSVM stopped after %d iterations with KKT violation %.3g", n_iter, kkt)
    return SsvmModel(
        alpha=alpha,
        alpha_star=alpha_star,
        bias=_bias(Kv, data, alpha, alpha_star, C),
        cost=float(C),
        event=event.copy(),
        train_ids=_as_kernel(K).row_ids,
        n_iter=int(n_iter),
        converged=bool(converged),
        jitter=jitter,
        history=history,
    )


def prognostic_index(model, K_cross, data=None):
    """``K_cross (alpha - event * alpha_star) + b`` for each test row."""
    values = _as_kernel(K_cross).values
    if values.shape[1] != model.alpha.size:
        raise ShapeMismatch(f"cross kernel has {values.shape[1]} columns, model has {model.alpha.size}")
    event = model.event if data is None else data.event
    if event.size != model.alpha.size:
        raise ShapeMismatch("survival data does not match the model")
    return values @ (model.alpha - event * model.alpha_star) + model.bias
