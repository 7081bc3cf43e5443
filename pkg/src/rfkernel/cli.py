"""Command line interface: ``rfkernel <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Options for any command may also come from a JSON object given with
``--config``; keys are the long option names with dashes replaced by
underscores. Options given on the command line win.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import harness, simgen
from .data import SurvivalData
from .errors import DataError, RFKernelError
from .forest import fit_forest
from .kernels import laplace_kernel, rf_kernel, write_kernel

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(value, cast=str):
    return [cast(v.strip()) for v in str(value).split(",") if v.strip()]


def _setups(value):
    if str(value).strip().lower() == "all":
        return list(simgen.SETUPS)
    return [simgen.canonical_setup(s) for s in _csv_list(value)]


def _add_common_data(p):
    p.add_argument("--reading", choices=("variance", "sd"), default="variance",
                   help="read N(0, 0.5) noise as variance or standard deviation")
    p.add_argument("--meier2-variant", choices=("reference", "printed"), default="reference")


def build_parser():
    parser = _Parser(prog="rfkernel", description="Random forest kernels with KRR and survival SVM.")
    parser.add_argument("--config", help="JSON file with option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a generated data set as CSV plus a JSON sidecar")
    p.add_argument("--setup", default="friedman")
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--p", type=int, default=20)
    p.add_argument("--target", choices=("continuous", "binary", "survival"), default="continuous")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--censoring", type=float, default=0.3)
    p.add_argument("--out", required=False)
    _add_common_data(p)

    p = sub.add_parser("bench", help="run scenarios and write the summary table")
    p.add_argument("--setup", default="friedman", help="comma list or 'all'")
    p.add_argument("--n", default="800", help="comma list of sample sizes")
    p.add_argument("--p", default="20", help="comma list of feature counts")
    p.add_argument("--target", choices=("continuous", "binary", "survival"), default="continuous")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--node-size-x2", action="store_true", help="double the minimum terminal node size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="RF,RFKernel,LaplaceKernel")
    p.add_argument("--out", help="summary CSV path (replicate records go next to it)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--n-trees", type=int, default=500)
    p.add_argument("--mtry-rule", choices=("sqrt", "third"), default="sqrt")
    p.add_argument("--sigma", type=float, default=1.0, help="Laplace kernel width")
    p.add_argument("--laplace-metric", choices=("l1", "l2"), default="l2")
    p.add_argument("--cost", type=float, default=1.0, help="survival SVM box bound C")
    p.add_argument("--ssvm-tol", type=float, help="survival SVM stopping tolerance (default 1e-6*C)")
    p.add_argument("--ssvm-max-iter", type=int, help="survival SVM sweep limit (default 50*n)")
    p.add_argument("--censoring", type=float, default=0.3)
    _add_common_data(p)

    p = sub.add_parser("bayes-error", help="Monte Carlo Bayes error of the binary problems")
    p.add_argument("--setup", default="all")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    _add_common_data(p)

    p = sub.add_parser("eval-csv", help="evaluate the methods on user CSV data")
    p.add_argument("--train", required=False)
    p.add_argument("--test")
    p.add_argument("--target", choices=("continuous", "binary", "survival"), default="continuous")
    p.add_argument("--methods", default="RF,RFKernel,LaplaceKernel")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-trees", type=int, default=500)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--laplace-metric", choices=("l1", "l2"), default="l2")
    p.add_argument("--cost", type=float, default=1.0)
    p.add_argument("--ssvm-tol", type=float)
    p.add_argument("--ssvm-max-iter", type=int)
    p.add_argument("--out")

    p = sub.add_parser("kernel-fig", help="Mantel grid and kernel-value histograms for plotting")
    p.add_argument("--data", required=False)
    p.add_argument("--label-column", default="label")
    p.add_argument("--sigmas", default="0.5,1,2,4")
    p.add_argument("--laplace-metric", choices=("l1", "l2"), default="l1")
    p.add_argument("--n-trees", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("export-kernel", help="write an RF or Laplace kernel matrix")
    p.add_argument("--data", required=False)
    p.add_argument("--test", help="rows of a cross kernel (defaults to the training rows)")
    p.add_argument("--target", choices=("continuous", "binary", "survival"), default="continuous")
    p.add_argument("--kernel", choices=("rf", "laplace"), default="rf")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--laplace-metric", choices=("l1", "l2"), default="l1")
    p.add_argument("--n-trees", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.add_argument("--out", required=False)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from the ``--config`` JSON file."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            conf = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config is not valid JSON: {exc}") from None
    if not isinstance(conf, dict):
        raise DataError("config must be a JSON object")
    sub = parser._subparsers._group_actions[0].choices.get(args.command)
    target = sub if sub is not None else parser
    known = {a.dest for a in target._actions}
    unknown = sorted(set(conf) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    target.set_defaults(**conf)
    return parser.parse_args(argv)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): "
                         + ", ".join("--" + n.replace("_", "-") for n in missing))


def _write_or_print(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    _require(args, "out")
    data = simgen.generate(args.setup, args.n, args.p, args.target, args.seed, reading=args.reading,
                           meier2_variant=args.meier2_variant, target_censoring=args.censoring)
    header = [f"x{j + 1}" for j in range(args.p)] + harness.TARGET_COLUMNS[args.target]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(args.n):
            if isinstance(data.target, SurvivalData):
                tail = [repr(float(data.target.time[k])), int(data.target.event[k])]
            elif args.target == "binary":
                tail = [int(data.target[k])]
            else:
                tail = [repr(float(data.target[k]))]
            w.writerow([repr(float(v)) for v in data.X[k]] + tail)
    meta = dict(data.meta, target=args.target, reading=args.reading, meier2_variant=args.meier2_variant)
    if args.target == "binary":
        meta["median"] = simgen.outcome_median(data.meta["setup"], args.reading, args.meier2_variant)
    with open(os.path.splitext(args.out)[0] + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def bench_configs(args):
    methods = tuple(_csv_list(args.methods))
    configs = []
    for setup in _setups(args.setup):
        for n in _csv_list(args.n, int):
            for p in _csv_list(args.p, int):
                configs.append(harness.ScenarioConfig(
                    setup=setup, n=n, p=p, target_kind=args.target, replicates=args.replicates,
                    methods=methods, node_size_multiplier=2 if args.node_size_x2 else 1,
                    base_seed=args.seed, n_trees=args.n_trees, mtry_rule=args.mtry_rule,
                    laplace_sigma=args.sigma, laplace_metric=args.laplace_metric, ssvm_cost=args.cost,
                    ssvm_tol=args.ssvm_tol, ssvm_max_iter=args.ssvm_max_iter,
                    target_censoring=args.censoring, noise_reading=args.reading,
                    meier2_variant=args.meier2_variant))
    return configs


def cmd_bench(args):
    results = harness.run_grid(bench_configs(args), workers=args.workers)
    summaries = [r.summary for r in results]
    sys.stdout.write(harness.format_table_text(summaries))
    if args.out:
        _write_or_print(harness.format_table_csv(summaries), args.out)
        stem = os.path.splitext(args.out)[0]
        _write_or_print(harness.format_replicates_csv(results), stem + ".replicates.csv")
        _write_or_print(harness.format_table_text(summaries), stem + ".txt")
    return EXIT_OK


def cmd_bayes_error(args):
    rows = [["setup", "bayes_error"]]
    for setup in _setups(args.setup):
        err = simgen.bayes_error(setup, args.samples, args.seed, args.reading, args.meier2_variant)
        rows.append([simgen.DISPLAY_NAMES[setup], f"{err:.4f}"])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerows(rows)
    return EXIT_OK


def cmd_eval_csv(args):
    _require(args, "train")
    records = harness.evaluate_csv(
        args.train, args.target, test_csv=args.test, methods=_csv_list(args.methods),
        repeats=args.repeats, train_fraction=args.train_fraction, seed=args.seed,
        n_trees=args.n_trees, laplace_sigma=args.sigma, laplace_metric=args.laplace_metric,
        ssvm_cost=args.cost, ssvm_tol=args.ssvm_tol, ssvm_max_iter=args.ssvm_max_iter)
    methods = list(records[0].values)
    lines = [["repeat", "split_hash", "metric"] + [harness.METHOD_HEADERS[m] for m in methods]]
    for r in records:
        lines.append([str(r.index), r.split_hash, r.metric]
                     + ["NA" if np.isnan(r.values[m]) else f"{r.values[m]:.6f}" for m in methods])
    text = "".join(",".join(line) + "\n" for line in lines)
    _write_or_print(text, args.out)
    return EXIT_OK


def cmd_kernel_fig(args):
    _require(args, "data")
    paths = harness.export_kernel_figure_data(
        args.data, args.out_dir, label_column=args.label_column,
        sigmas=_csv_list(args.sigmas, float), n_trees=args.n_trees, seed=args.seed,
        bins=args.bins, laplace_metric=args.laplace_metric)
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_export_kernel(args):
    _require(args, "data", "out")
    header, table = harness.read_table(args.data)
    _, X, target = harness.split_columns(header, table, args.target)
    X_rows = X
    if args.test:
        t_header, t_table = harness.read_table(args.test)
        _, X_rows, _ = harness.split_columns(t_header, t_table, args.target)
    if args.kernel == "rf":
        forest = fit_forest(X, target, n_trees=args.n_trees, seed=args.seed, target_kind=args.target)
        K = rf_kernel(forest, X_rows, None if X_rows is X else X)
    else:
        K = laplace_kernel(X_rows, None if X_rows is X else X, sigma=args.sigma,
                           metric=args.laplace_metric)
    write_kernel(K, args.out, fmt=args.format)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "bayes-error": cmd_bayes_error,
    "eval-csv": cmd_eval_csv,
    "kernel-fig": cmd_kernel_fig,
    "export-kernel": cmd_export_kernel,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rfkernel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RFKernelError as exc:
        print(f"rfkernel: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, TypeError, ValueError) as exc:
        print(f"rfkernel: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
