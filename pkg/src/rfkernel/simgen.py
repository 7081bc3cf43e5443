"""Synthetic benchmarks: Friedman, Checkerboard, van der Laan, Meier 1 and Meier 2.

Each setup defines a signal ``f(X)``. Continuous targets add Gaussian noise.
Binary targets draw Bernoulli labels with probability
``logistic(Y - M)``, where ``Y`` is the noisy continuous outcome and ``M``
its median. Survival targets use a Cox model with constant baseline hazard
plus exponential censoring tuned to a requested censoring fraction.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .data import SurvivalData
from .errors import CensoringUnattainable, DataError, InsufficientFeatures

SETUPS = ("friedman", "checkerboard", "vanderlaan", "meier1", "meier2")

MIN_FEATURES = {"friedman": 5, "checkerboard": 20, "vanderlaan": 10, "meier1": 4, "meier2": 4}

# stated noise parameter; 0.5 is a variance or a standard deviation depending on the reading
_NOISE_PARAM = {"friedman": 1.0, "checkerboard": 1.0, "vanderlaan": 0.5, "meier1": 0.5, "meier2": 0.5}

_ALIASES = {
    "van der laan": "vanderlaan", "van_der_laan": "vanderlaan", "vdl": "vanderlaan",
    "meier 1": "meier1", "meier_1": "meier1", "meier 2": "meier2", "meier_2": "meier2",
}

DISPLAY_NAMES = {
    "friedman": "Friedman", "checkerboard": "Checkerboard", "vanderlaan": "van der Laan",
    "meier1": "Meier 1", "meier2": "Meier 2",
}

CONSTANT_SEED = 20200101  # seed domain for cached medians and censoring pilots
MEDIAN_DRAWS = 1_000_000
PILOT_DRAWS = 100_000


def canonical_setup(name):
    key = str(name).strip().lower()
    key = _ALIASES.get(key, key)
    if key not in SETUPS:
        raise DataError(f"unknown setup {name!r}; expected one of {', '.join(SETUPS)}")
    return key


def _tilde(X, cols):
    return 2.0 * (X[:, cols] - 0.5)


def _meier2_reference(t1, t2, t3, t4):
    s4 = np.sin(2 * np.pi * t4)
    c4 = np.cos(2 * np.pi * t4)
    s3 = np.sin(2 * np.pi * t3)
    return (-t1 + (2 * t2 - 1) ** 2 + s3 / (2 - s3)
            + 0.1 * s4 + 0.2 * c4 + 0.3 * s4**2 + 0.4 * c4**3 + 0.5 * s4**3)


def _meier2_printed(t1, t2, t3, t4):
    s3 = np.sin(2 * np.pi * t3)
    s4 = np.sin(2 * np.pi * t4)
    c4 = np.cos(2 * np.pi * t4)
    return -t1 + (2 * t2 - 1) ** 2 + s3 / (2 - s4) + 2 * c4 + 4 * c4**2


def signal(setup, X, meier2_variant="reference"):
    """Noise-free regression function for a setup.

    ``X`` may be one row or a matrix; columns beyond those the setup uses are
    ignored. ``meier2_variant="printed"`` selects the alternative Meier 2
    formula with a ``2 cos + 4 cos^2`` fourth component.
    """
    setup = canonical_setup(setup)
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] < MIN_FEATURES[setup]:
        raise InsufficientFeatures(f"{setup} needs at least {MIN_FEATURES[setup]} features, got {X.shape[1]}")
    if setup == "friedman":
        f = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
             + 10 * X[:, 3] + 5 * X[:, 4])
    elif setup == "checkerboard":
        f = 2 * X[:, 4] * X[:, 9] + 2 * X[:, 14] * X[:, 19]
    elif setup == "vanderlaan":
        T = _tilde(X, [0, 1, 2, 5, 7, 9])
        f = T[:, 0] * T[:, 1] + T[:, 2] ** 2 + T[:, 4] * T[:, 5] - T[:, 3] ** 2
    elif setup == "meier1":
        T = _tilde(X, [0, 1, 2, 3])
        f = -np.sin(2 * T[:, 0]) + T[:, 1] ** 2 + T[:, 2] - np.exp(T[:, 3])
    else:
        T = _tilde(X, [0, 1, 2, 3])
        if meier2_variant == "reference":
            f = _meier2_reference(T[:, 0], T[:, 1], T[:, 2], T[:, 3])
        elif meier2_variant == "printed":
            f = _meier2_printed(T[:, 0], T[:, 1], T[:, 2], T[:, 3])
        else:
            raise DataError(f"unknown Meier 2 variant {meier2_variant!r}")
    return float(f[0]) if single else f


def checkerboard_covariance(p):
    idx = np.arange(p)
    return 0.9 ** np.abs(idx[:, None] - idx[None, :])


def gen_features(setup, n, p, rng):
    """Uniform(0, 1) features, or correlated normals for Checkerboard."""
    setup = canonical_setup(setup)
    if p < MIN_FEATURES[setup]:
        raise InsufficientFeatures(f"{setup} needs p >= {MIN_FEATURES[setup]}, got {p}")
    if setup == "checkerboard":
        L = np.linalg.cholesky(checkerboard_covariance(p))
        return rng.standard_normal((n, p)) @ L.T
    return rng.random((n, p))


def noise_sd(setup, reading="variance"):
    """Noise standard deviation; ``reading`` says how N(0, 0.5) is interpreted."""
    setup = canonical_setup(setup)
    param = _NOISE_PARAM[setup]
    if reading == "variance":
        return float(np.sqrt(param))
    if reading == "sd":
        return float(param)
    raise DataError(f"noise reading must be 'variance' or 'sd', got {reading!r}")


@dataclass(frozen=True, eq=False)
class GeneratedData:
    X: np.ndarray
    f: np.ndarray
    target: object
    kind: str
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]


def make_continuous(setup, X, rng, noise=None, reading="variance", meier2_variant="reference"):
    """``Y = f(X) + eps``; ``noise`` overrides the setup's noise sd (0 for none)."""
    setup = canonical_setup(setup)
    f = signal(setup, X, meier2_variant)
    sd = noise_sd(setup, reading) if noise is None else float(noise)
    y = f + sd * rng.standard_normal(f.size)
    return GeneratedData(np.asarray(X), f, y, "continuous",
                         {"setup": setup, "noise_sd": sd})


@lru_cache(maxsize=None)
def outcome_median(setup, reading="variance", meier2_variant="reference", draws=MEDIAN_DRAWS):
    """Median of the noisy continuous outcome, from ``draws`` fresh samples."""
    setup = canonical_setup(setup)
    rng = np.random.default_rng([CONSTANT_SEED, SETUPS.index(setup), 1])
    X = gen_features(setup, draws, MIN_FEATURES[setup], rng)
    y = signal(setup, X, meier2_variant) + noise_sd(setup, reading) * rng.standard_normal(draws)
    return float(np.median(y))


@lru_cache(maxsize=None)
def signal_median(setup, meier2_variant="reference", draws=MEDIAN_DRAWS):
    """Median of ``f(X)``, used to centre the log hazard."""
    setup = canonical_setup(setup)
    rng = np.random.default_rng([CONSTANT_SEED, SETUPS.index(setup), 2])
    X = gen_features(setup, draws, MIN_FEATURES[setup], rng)
    return float(np.median(signal(setup, X, meier2_variant)))


def class_probability(y, median):
    """P(label = +1) for continuous outcomes ``y`` centred by ``median``."""
    return expit(np.asarray(y, dtype=float) - median)


def make_binary(setup, X, rng, reading="variance", meier2_variant="reference"):
    """Bernoulli labels in {-1, +1} with median-centred logistic probabilities."""
    setup = canonical_setup(setup)
    cont = make_continuous(setup, X, rng, reading=reading, meier2_variant=meier2_variant)
    median = outcome_median(setup, reading, meier2_variant)
    prob = class_probability(cont.target, median)
    labels = np.where(rng.random(prob.size) < prob, 1.0, -1.0)
    meta = dict(cont.meta, median=median, positive_fraction=float(np.mean(labels > 0)))
    return GeneratedData(np.asarray(X), cont.f, labels, "binary", meta)


def bayes_error_from_probability(prob):
    prob = np.asarray(prob, dtype=float)
    return float(1.0 - np.mean(np.maximum(prob, 1.0 - prob)))


def bayes_error(setup, samples=1_000_000, seed=0, reading="variance", meier2_variant="reference"):
    """Monte Carlo estimate of ``1 - E[max_j P(label = j | X)]``."""
    if samples < 100_000:
        raise DataError("bayes_error needs at least 1e5 samples")
    setup = canonical_setup(setup)
    rng = np.random.default_rng([seed, SETUPS.index(setup), 3])
    X = gen_features(setup, samples, MIN_FEATURES[setup], rng)
    cont = make_continuous(setup, X, rng, reading=reading, meier2_variant=meier2_variant)
    prob = class_probability(cont.target, outcome_median(setup, reading, meier2_variant))
    return bayes_error_from_probability(prob)


def censoring_fraction(rate, hazards):
    """Expected fraction censored when T ~ Exp(hazard) and C ~ Exp(rate)."""
    return float(np.mean(rate / (rate + hazards)))


@lru_cache(maxsize=None)
def censoring_rate(setup, target, baseline_rate=1.0, meier2_variant="reference"):
    """Rate of the exponential censoring distribution hitting ``target``.

    Solved by bracketing root search on a fixed pilot sample; the censored
    fraction given X is ``rate / (rate + hazard)`` in closed form.
    """
    if target == 0:
        return 0.0
    if not 0 < target < 1:
        raise CensoringUnattainable(f"censoring target must be in [0, 1), got {target}")
    setup = canonical_setup(setup)
    rng = np.random.default_rng([CONSTANT_SEED, SETUPS.index(setup), 4])
    X = gen_features(setup, PILOT_DRAWS, MIN_FEATURES[setup], rng)
    hazards = baseline_rate * np.exp(signal(setup, X, meier2_variant) - signal_median(setup, meier2_variant))
    lo, hi = -40.0, 40.0
    g = lambda log_rate: censoring_fraction(np.exp(log_rate), hazards) - target
    if g(lo) > 0 or g(hi) < 0:
        raise CensoringUnattainable(f"cannot bracket censoring fraction {target}")
    return float(np.exp(brentq(g, lo, hi, xtol=1e-12)))


def make_survival(setup, X, rng, baseline_rate=1.0, target_censoring=0.3,
                  meier2_variant="reference"):
    """Cox-model survival times with exponential censoring.

    ``T = -log(U) / (baseline_rate * exp(f - median f))``; censoring times
    are exponential with a rate chosen so the expected censored fraction is
    ``target_censoring``. Observed time is ``min(T, C)``.
    """
    setup = canonical_setup(setup)
    f = signal(setup, X, meier2_variant)
    centre = signal_median(setup, meier2_variant)
    hazard = baseline_rate * np.exp(f - centre)
    T = rng.standard_exponential(f.size) / hazard
    rate = censoring_rate(setup, float(target_censoring), float(baseline_rate), meier2_variant)
    if rate > 0:
        C = rng.standard_exponential(f.size) / rate
    else:
        C = np.full(f.size, np.inf)
    event = (T <= C).astype(float)
    time = np.minimum(T, C)
    meta = {
        "setup": setup,
        "baseline_rate": baseline_rate,
        "censoring_rate": rate,
        "signal_median": centre,
        "target_censoring": target_censoring,
        "censored_fraction": float(1.0 - event.mean()),
    }
    return GeneratedData(np.asarray(X), f, SurvivalData(time, event), "survival", meta)


def generate(setup, n, p, target_kind, seed, **options):
    """Features plus a target of the requested kind, all from one seed."""
    setup = canonical_setup(setup)
    rng = np.random.default_rng(seed)
    X = gen_features(setup, n, p, rng)
    variant = options.get("meier2_variant", "reference")
    if target_kind == "continuous":
        out = make_continuous(setup, X, rng, reading=options.get("reading", "variance"),
                              meier2_variant=variant)
    elif target_kind == "binary":
        out = make_binary(setup, X, rng, reading=options.get("reading", "variance"),
                          meier2_variant=variant)
    elif target_kind == "survival":
        out = make_survival(setup, X, rng, baseline_rate=options.get("baseline_rate", 1.0),
                            target_censoring=options.get("target_censoring", 0.3),
                            meier2_variant=variant)
    else:
        raise DataError(f"unknown target kind {target_kind!r}")
    out.meta.update(seed=int(seed) if np.ndim(seed) == 0 else list(map(int, seed)), n=n, p=p)
    return out
