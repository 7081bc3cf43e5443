"""Simulation study driver: replicates, scenario summaries, grids and CSV evaluation.

Every replicate derives all of its randomness from ``(base_seed, index)``,
so results do not depend on which replicates run, in which order, or on
how many worker processes share the work.
"""

import csv
import hashlib
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import simgen
from .data import SurvivalData, as_labels
from .errors import AllCensored, DataError, ParseError, RFKernelError, SchemaError
from .forest import default_params, fit_forest, predict_forest, predict_labels
from .kernels import kernel_value_histogram, laplace_kernel, mantel_statistic, rf_kernel
from .krr import classify_krr, fit_krr, predict_krr
from .metrics import accuracy, c_index, mse
from .ssvm import prognostic_index, solve_ssvm

log = logging.getLogger(__name__)

METHODS = ("RF", "RFKernel", "LaplaceKernel")
METHOD_HEADERS = {"RF": "RF", "RFKernel": "RF kernel", "LaplaceKernel": "L kernel"}
TABLE_HEADER = ["Setup", "n", "p", "RF", "RF kernel", "L kernel", "Δ_RF"]
METRIC_FOR_KIND = {"continuous": "MSE", "binary": "Accuracy", "survival": "CIndex"}
TARGET_COLUMNS = {"continuous": ["y"], "binary": ["label"], "survival": ["time", "event"]}

_MASK64 = 2**64 - 1


@dataclass(frozen=True)
class ScenarioConfig:
    setup: str
    n: int
    p: int
    target_kind: str = "continuous"
    replicates: int = 20
    train_fraction: float = 0.75
    methods: tuple = METHODS
    node_size_multiplier: int = 1
    base_seed: int = 0
    n_trees: int = 500
    mtry_rule: str = "sqrt"
    laplace_sigma: float = 1.0
    laplace_metric: str = "l2"
    ssvm_cost: float = 1.0
    ssvm_tol: float = None
    ssvm_max_iter: int = None
    target_censoring: float = 0.3
    noise_reading: str = "variance"
    meier2_variant: str = "reference"

    def __post_init__(self):
        object.__setattr__(self, "setup", simgen.canonical_setup(self.setup))
        object.__setattr__(self, "methods", tuple(canonical_method(m) for m in self.methods))
        if self.target_kind not in METRIC_FOR_KIND:
            raise DataError(f"unknown target kind {self.target_kind!r}")
        if not 0 < self.train_fraction < 1:
            raise DataError("train_fraction must be in (0, 1)")
        if self.replicates < 1:
            raise DataError("replicates must be >= 1")
        if self.node_size_multiplier < 1:
            raise DataError("node_size_multiplier must be >= 1")
        if not self.methods:
            raise DataError("at least one method is required")

    @property
    def metric(self):
        return METRIC_FOR_KIND[self.target_kind]


def canonical_method(name):
    key = str(name).replace(" ", "").replace("_", "").replace("-", "").lower()
    table = {"rf": "RF", "rfkernel": "RFKernel", "rfk": "RFKernel",
             "laplacekernel": "LaplaceKernel", "laplace": "LaplaceKernel", "lkernel": "LaplaceKernel"}
    if key not in table:
        raise DataError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
    return table[key]


def replicate_seed(base_seed, index):
    """``base_seed`` XOR a stable 64-bit hash of the replicate index."""
    digest = hashlib.blake2b(f"replicate:{int(index)}".encode(), digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(digest, "little")) & _MASK64


def split_hash(train, test):
    h = hashlib.sha256()
    h.update(np.asarray(train, dtype="<i8").tobytes())
    h.update(b"|")
    h.update(np.asarray(test, dtype="<i8").tobytes())
    return h.hexdigest()[:16]


def random_split(n, train_fraction, rng):
    n_train = int(round(train_fraction * n))
    if not 0 < n_train < n:
        raise DataError(f"split of {n} rows leaves an empty train or test set")
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


@dataclass(frozen=True)
class ReplicateRecord:
    index: int
    seed: int
    split_hash: str
    metric: str
    values: dict
    errors: dict = field(default_factory=dict)


def _oriented(h_train, h_test, train_target):
    """Flip the score sign when it ranks training risk backwards."""
    if c_index(train_target, h_train).value < 0.5:
        return -h_test
    return h_test


def evaluate_split(X_train, target_train, X_test, target_test, target_kind, methods=METHODS,
                   n_trees=500, seed=0, node_size_multiplier=1, mtry_rule="sqrt",
                   laplace_sigma=1.0, laplace_metric="l2", ssvm_cost=1.0, ssvm_tol=None,
                   ssvm_max_iter=None):
    """Fit every requested method on one train/test split and score it on the test rows.

    A method that raises a package error is recorded as NaN with its message
    instead of aborting the others. ``ssvm_tol`` and ``ssvm_max_iter`` of
    ``None`` keep the solver defaults. Returns ``(values, errors)``.
    """
    methods = tuple(canonical_method(m) for m in methods)
    values, errors = {}, {}
    forest = None
    needs_forest = "RF" in methods or "RFKernel" in methods
    if needs_forest:
        try:
            params = default_params(target_kind, node_size_multiplier, mtry_rule)
            forest = fit_forest(X_train, target_train, params, n_trees=n_trees, seed=seed,
                                target_kind=target_kind)
        except RFKernelError as exc:
            for m in ("RF", "RFKernel"):
                if m in methods:
                    values[m], errors[m] = math.nan, f"{type(exc).__name__}: {exc}"

    def kernel_method(K, K_cross):
        if target_kind == "continuous":
            return mse(target_test, predict_krr(fit_krr(K, target_train), K_cross)).value
        if target_kind == "binary":
            return accuracy(target_test, classify_krr(fit_krr(K, target_train), K_cross)).value
        model = solve_ssvm(K, target_train, C=ssvm_cost, tol=ssvm_tol, max_iter=ssvm_max_iter)
        h = _oriented(prognostic_index(model, K), prognostic_index(model, K_cross), target_train)
        return c_index(target_test, h).value

    for method in methods:
        if method in values:
            continue
        try:
            if method == "RF":
                if target_kind == "continuous":
                    values[method] = mse(target_test, predict_forest(forest, X_test)).value
                elif target_kind == "binary":
                    values[method] = accuracy(target_test, predict_labels(forest, X_test)).value
                else:
                    h = _oriented(predict_forest(forest, X_train), predict_forest(forest, X_test),
                                  target_train)
                    values[method] = c_index(target_test, h).value
            elif method == "RFKernel":
                values[method] = kernel_method(rf_kernel(forest, X_train),
                                               rf_kernel(forest, X_test, X_train))
            else:
                values[method] = kernel_method(
                    laplace_kernel(X_train, sigma=laplace_sigma, metric=laplace_metric),
                    laplace_kernel(X_test, X_train, sigma=laplace_sigma, metric=laplace_metric))
        except RFKernelError as exc:
            log.warning("%s failed: %s", method, exc)
            values[method], errors[method] = math.nan, f"{type(exc).__name__}: {exc}"
    return {m: float(values[m]) for m in methods}, errors


def _subset(target, rows):
    return target.subset(rows) if isinstance(target, SurvivalData) else target[rows]


def run_replicate(config, index):
    """Generate, split, fit and score one replicate of a scenario."""
    seed = replicate_seed(config.base_seed, index)
    data_seed, split_seed, forest_seed = np.random.SeedSequence(seed).generate_state(3, dtype=np.uint64)
    data = simgen.generate(config.setup, config.n, config.p, config.target_kind, int(data_seed),
                           reading=config.noise_reading, meier2_variant=config.meier2_variant,
                           target_censoring=config.target_censoring)
    train, test = random_split(config.n, config.train_fraction, np.random.default_rng(int(split_seed)))
    values, errors = evaluate_split(
        data.X[train], _subset(data.target, train), data.X[test], _subset(data.target, test),
        config.target_kind, config.methods, n_trees=config.n_trees, seed=int(forest_seed),
        node_size_multiplier=config.node_size_multiplier, mtry_rule=config.mtry_rule,
        laplace_sigma=config.laplace_sigma,
        laplace_metric=config.laplace_metric, ssvm_cost=config.ssvm_cost, ssvm_tol=config.ssvm_tol,
        ssvm_max_iter=config.ssvm_max_iter)
    return ReplicateRecord(int(index), seed, split_hash(train, test), config.metric, values, errors)


@dataclass(frozen=True)
class SummaryRow:
    setup: str
    n: int
    p: int
    metric: str
    means: dict
    sds: dict
    delta_rf_mean: float
    delta_rf_sd: float
    n_replicates: int
    flags: tuple = ()


def _mean_sd(values):
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values, ddof=1))


def summarize(config, records):
    """Mean and sd per method, plus the paired RF kernel minus RF difference."""
    records = sorted(records, key=lambda r: r.index)
    means, sds = {}, {}
    for m in config.methods:
        means[m], sds[m] = _mean_sd([r.values[m] for r in records])
    flags = []
    if len(records) == 1:
        flags.append("single_replicate")
    if any(math.isnan(v) for r in records for v in r.values.values()):
        flags.append("missing_values")
    if "RF" in config.methods and "RFKernel" in config.methods:
        diffs = [r.values["RFKernel"] - r.values["RF"] for r in records]
        d_mean, d_sd = _mean_sd(diffs)
    else:
        d_mean, d_sd = math.nan, math.nan
    return SummaryRow(config.setup, config.n, config.p, config.metric, means, sds,
                      d_mean, d_sd, len(records), tuple(flags))


@dataclass(frozen=True)
class ScenarioResult:
    config: ScenarioConfig
    records: tuple
    summary: SummaryRow


def _run_one(args):
    config, index = args
    return run_replicate(config, index)


def _run_replicates(jobs, workers):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def run_scenario(config, workers=1):
    records = _run_replicates([(config, i) for i in range(config.replicates)], workers)
    records = tuple(sorted(records, key=lambda r: r.index))
    return ScenarioResult(config, records, summarize(config, records))


def run_grid(configs, workers=1):
    """Run many scenarios; replicates of all scenarios share one worker pool."""
    configs = list(configs)
    jobs = [(c, i) for c in configs for i in range(c.replicates)]
    done = _run_replicates(jobs, workers)
    results = []
    pos = 0
    for c in configs:
        records = tuple(sorted(done[pos:pos + c.replicates], key=lambda r: r.index))
        pos += c.replicates
        results.append(ScenarioResult(c, records, summarize(c, records)))
    return results


def _cell(mean, sd):
    if math.isnan(mean):
        return "NA"
    return f"{mean:.3f} ({sd:.3f})"


def table_rows(summaries):
    rows = []
    for s in summaries:
        row = [simgen.DISPLAY_NAMES[s.setup], str(s.n), str(s.p)]
        for m in METHODS:
            row.append(_cell(s.means[m], s.sds[m]) if m in s.means else "NA")
        row.append(_cell(s.delta_rf_mean, s.delta_rf_sd))
        rows.append(row)
    return rows


def format_table_csv(summaries):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    w.writerows(table_rows(summaries))
    return buf.getvalue()


def format_table_text(summaries):
    rows = [TABLE_HEADER] + table_rows(summaries)
    widths = [max(len(r[k]) for r in rows) for k in range(len(TABLE_HEADER))]
    lines = ["  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(r, widths)))
             for r in rows]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def format_replicates_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Setup", "n", "p", "target", "replicate", "seed", "split_hash", "metric"]
               + [METHOD_HEADERS[m] for m in METHODS])
    for res in results:
        c = res.config
        for r in res.records:
            vals = [repr(r.values[m]) if m in r.values and not math.isnan(r.values[m]) else "NA"
                    for m in METHODS]
            w.writerow([simgen.DISPLAY_NAMES[c.setup], c.n, c.p, c.target_kind, r.index, r.seed,
                        r.split_hash, r.metric] + vals)
    return buf.getvalue()


# --------------------------------------------------------------------------- user CSV data


def read_table(path):
    """Read a numeric CSV with a header row into ``(columns, matrix)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise SchemaError(f"{path} has duplicate column names")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line_no)
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no) from None
    if not rows:
        raise SchemaError(f"{path} has no data rows")
    return header, np.asarray(rows, dtype=float)


def read_labeled_table(path, label_column):
    """Numeric features plus a label column of arbitrary strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        if label_column not in header:
            raise SchemaError(f"label column {label_column!r} not found in {path}")
        li = header.index(label_column)
        feats, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line_no)
            try:
                feats.append([float(c) for k, c in enumerate(row) if k != li])
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no) from None
            labels.append(row[li].strip())
    if not feats:
        raise SchemaError(f"{path} has no data rows")
    return np.asarray(feats), np.asarray(labels)


def split_columns(header, table, target_kind):
    """Separate the target column(s) from the feature columns."""
    if target_kind not in TARGET_COLUMNS:
        raise DataError(f"unknown target kind {target_kind!r}")
    names = TARGET_COLUMNS[target_kind]
    missing = [c for c in names if c not in header]
    if missing:
        raise SchemaError(f"missing target column(s) {', '.join(missing)} for {target_kind} data")
    feature_idx = [k for k, h in enumerate(header) if h not in names]
    if not feature_idx:
        raise SchemaError("no feature columns")
    X = table[:, feature_idx]
    if target_kind == "survival":
        event = table[:, header.index("event")]
        if event.size and np.all(event == 0):
            raise AllCensored("column 'event' has no events (all rows censored)")
        target = SurvivalData(table[:, header.index("time")], event)
    elif target_kind == "binary":
        try:
            target = as_labels(table[:, header.index("label")])
        except DataError as exc:
            raise SchemaError(f"column 'label': {exc}") from None
    else:
        target = table[:, header.index("y")]
    return [header[k] for k in feature_idx], X, target


def evaluate_csv(train_csv, target_kind, test_csv=None, methods=METHODS, repeats=1,
                 train_fraction=0.75, seed=0, **options):
    """Run the benchmark pipeline on user data.

    With ``test_csv`` the given split is evaluated once (``repeats`` then
    only varies the forest seed). Without it, ``repeats`` random splits of
    ``train_csv`` are drawn. ``options`` go to :func:`evaluate_split`.
    """
    header, table = read_table(train_csv)
    names, X, target = split_columns(header, table, target_kind)
    if test_csv is not None:
        t_header, t_table = read_table(test_csv)
        t_names, X_test, target_test = split_columns(t_header, t_table, target_kind)
        if t_names != names:
            raise SchemaError("train and test files have different feature columns")
    records = []
    for r in range(int(repeats)):
        rseed = replicate_seed(seed, r)
        split_seed, forest_seed = np.random.SeedSequence(rseed).generate_state(2, dtype=np.uint64)
        if test_csv is None:
            tr, te = random_split(X.shape[0], train_fraction, np.random.default_rng(int(split_seed)))
            parts = (X[tr], _subset(target, tr), X[te], _subset(target, te))
            shash = split_hash(tr, te)
        else:
            parts = (X, target, X_test, target_test)
            shash = "given"
        values, errors = evaluate_split(*parts, target_kind, methods, seed=int(forest_seed), **options)
        records.append(ReplicateRecord(r, rseed, shash, METRIC_FOR_KIND[target_kind], values, errors))
    return records


# --------------------------------------------------------------------------- kernel figure data

DEFAULT_SIGMAS = (0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True, eq=False)
class KernelFigureData:
    names: list
    mantel: np.ndarray
    histograms: dict


def kernel_figure_data(X, labels, sigmas=DEFAULT_SIGMAS, n_trees=500, seed=0, bins=20,
                       laplace_metric="l1"):
    """RF kernel and Laplace kernels at several widths, their Mantel grid and histograms."""
    labels = np.asarray(labels)
    forest = fit_forest(X, labels, n_trees=n_trees, seed=seed, target_kind="multiclass")
    kernels = {"RF": rf_kernel(forest, X)}
    for s in sigmas:
        kernels[f"Laplace(sigma={s:g})"] = laplace_kernel(X, sigma=s, metric=laplace_metric)
    names = list(kernels)
    grid = np.ones((len(names), len(names)))
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            grid[a, b] = grid[b, a] = mantel_statistic(kernels[names[a]], kernels[names[b]])
    hists = {name: kernel_value_histogram(K, labels, bins=bins) for name, K in kernels.items()}
    return KernelFigureData(names, grid, hists)


def export_kernel_figure_data(dataset_csv, out_dir, label_column="label", sigmas=DEFAULT_SIGMAS,
                              n_trees=500, seed=0, bins=20, laplace_metric="l1"):
    """Write ``mantel.csv`` and ``histograms.csv`` for external plotting; returns the paths."""
    X, labels = read_labeled_table(dataset_csv, label_column)
    fig = kernel_figure_data(X, labels, sigmas, n_trees, seed, bins, laplace_metric)
    os.makedirs(out_dir, exist_ok=True)
    mantel_path = os.path.join(out_dir, "mantel.csv")
    with open(mantel_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kernel"] + fig.names)
        for name, row in zip(fig.names, fig.mantel):
            w.writerow([name] + [f"{v:.6f}" for v in row])
    hist_path = os.path.join(out_dir, "histograms.csv")
    with open(hist_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kernel", "bin_lo", "bin_hi", "same_class", "cross_class"])
        for name, h in fig.histograms.items():
            for k in range(h.same_class.size):
                w.writerow([name, f"{h.edges[k]:.6g}", f"{h.edges[k + 1]:.6g}",
                            int(h.same_class[k]), int(h.cross_class[k])])
    return mantel_path, hist_path


def config_dict(config):
    d = asdict(config)
    d["methods"] = list(config.methods)
    return d


def with_overrides(config, **changes):
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
