"""Command-line front end.

Exit codes: 0 success, 1 usage or invalid argument, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import persist
from .closed_form import RegularizerSpec, fit_dlae, fit_ease, fit_lrr, fit_mf, spectrum_table
from .data import Dataset, Protocol, SplitSpec, load_interactions, split
from .errors import DataError, NumericalError
from .evaluation import evaluate, parse_metric
from .iterative import WmfConfig, fit_wmf
from .nearby import tune_nearby
from .search import GridSpec, TuneConfig, TunedModel, grid_search, tune_lambdas
from .spectral import SpectralDecomposition, gram_eigen

_log = logging.getLogger("linrec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _metric_list(text):
    names = [x.strip().lower() for x in text.split(",") if x.strip()]
    try:
        for name in names:
            parse_metric(name)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return names


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _load_train(path):
    obj = persist.load(path)
    if isinstance(obj, Dataset):
        return obj.train
    if hasattr(obj, "indptr"):
        return obj
    raise DataError(f"{path} holds neither interactions nor a dataset")


def _load_dataset(path, args, protocol=None):
    obj = persist.load(path)
    if isinstance(obj, Dataset):
        if protocol is not None and obj.protocol.value != protocol:
            raise DataError(f"{path} was split with protocol {obj.protocol.value}, not {protocol}")
        return obj
    spec = SplitSpec(Protocol(protocol or "strong"), args.seed, tuple(args.fractions),
                     args.holdout)
    return split(obj, spec)


def _load_spectral(args, train):
    if args.spectral:
        return persist.load(args.spectral, "spectral")
    return gram_eigen(train)


def _load_similarity(path):
    obj = persist.load(path)
    if isinstance(obj, TunedModel):
        return obj.similarity()
    if not hasattr(obj, "materialize"):
        raise DataError(f"{path} does not hold an item-item similarity model")
    return obj


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(args):
    x = load_interactions(args.input, args.binarize_threshold, args.min_user_items,
                          args.min_item_users, args.delimiter, args.header)
    persist.save(x, args.out)
    print(f"{x.num_users} users, {x.num_items} items, {x.nnz} interactions -> {args.out}")


def cmd_split(args):
    x = persist.load(args.data, "interactions")
    ds = split(x, SplitSpec(Protocol(args.protocol), args.seed, tuple(args.fractions),
                            args.holdout))
    persist.save(ds, args.out)
    print(f"train users {ds.train.num_users}, validation {len(ds.validation_folds)}, "
          f"test {len(ds.test_folds)}, skipped {ds.skipped_users} -> {args.out}")


def cmd_decompose(args):
    train = _load_train(args.data)
    spec = gram_eigen(train, args.rank_tol)
    persist.save(spec, args.out)
    print(f"rank {spec.rank}, sigma_1 {spec.sigma[0]:.6g} -> {args.out}")


def cmd_fit(args):
    train = _load_train(args.data)
    need = {"lrr": ("k", "lam"), "mf": ("k", "lam"), "ease": ("lam",), "dlae": ("p",),
            "wmf": ("k",)}[args.model]
    missing = [n for n in need if getattr(args, n) is None]
    if missing:
        flags = {"k": "--k", "lam": "--lambda", "p": "--p"}
        raise UsageError(f"fit --model {args.model} requires {', '.join(flags[n] for n in missing)}")
    if args.model == "lrr":
        spec = _load_spectral(args, train)
        reg = RegularizerSpec.constant(args.lam)
        model = fit_lrr(spec, args.k, reg, strict=args.strict)
    elif args.model == "mf":
        spec = _load_spectral(args, train)
        model = fit_mf(spec, train, args.k, args.lam)
    elif args.model == "ease":
        model = fit_ease(train, args.lam)
    elif args.model == "dlae":
        model = fit_dlae(train, args.p)
    else:
        cfg = WmfConfig(args.k, args.lam or 0.0, args.alpha, args.iters, args.seed)
        model, trace = fit_wmf(train, cfg)
        model.provenance["objective_trace"] = [float(v) for v in trace]
    persist.save(model, args.out)
    print(f"{args.model} model -> {args.out}")


def cmd_grid(args):
    spec = persist.load(args.spectral, "spectral")
    ds = _load_dataset(args.data, args)
    grid = GridSpec(tuple(args.lambdas), tuple(sorted(args.ks)), args.metric)
    cells = grid_search(spec, ds, grid, which=args.split)
    _write_csv(args.out, ["lambda", "k", "metric", "value", "best"],
               [(c.lam, c.k, grid.metric, c.value, int(c.best)) for c in cells])
    best = cells[0]
    print(f"best lambda={best.lam:g} k={best.k} {grid.metric}={best.value:.5f} -> {args.out}")


def _tune_config(args, lambda0=1.0, c=0.0):
    return TuneConfig(lambda0=lambda0, c=c, t_scale=args.t_scale, epochs=args.epochs,
                      batch_size=args.batch, seed=args.seed, learning_rate=args.lr,
                      dropout_rate=args.dropout)


def cmd_tune(args):
    base = persist.load(args.model)
    if not getattr(base, "factored", False) or base.sigma is None:
        raise DataError("tune needs a factored LRR model (from `fit --model lrr`)")
    lam = args.lam if args.lam is not None else base.provenance.get("lambda")
    if lam is None:
        raise UsageError("base model records no lambda; pass --lambda")
    train = _load_train(args.data)
    spec = SpectralDecomposition(base.sigma, base.left)
    cfg = _tune_config(args, float(lam), args.c)
    tuned = tune_lambdas(spec, len(base.sigma), train, cfg)
    persist.save(tuned, args.out)
    if args.trace_csv:
        _write_csv(args.trace_csv, ["epoch", "loss"],
                   [(e + 1, v) for e, v in enumerate(tuned.loss_trace)])
    if args.lambdas_csv:
        _write_csv(args.lambdas_csv, ["i", "sigma_i", "lambda_i", "d_i"],
                   [(i + 1, s, lm, d) for i, (s, lm, d)
                    in enumerate(zip(tuned.sigma, tuned.lambdas, np.atleast_1d(tuned.d)))])
    final = tuned.loss_trace[-1] if len(tuned.loss_trace) else float("nan")
    print(f"tuned {len(tuned.alphas)} lambdas, final loss {final:.6f} -> {args.out}")


def cmd_augment(args):
    base = _load_similarity(args.model)
    train = _load_train(args.data)
    cfg = _tune_config(args)
    model, trace = tune_nearby(base, args.mode, train, cfg, rmd=args.rmd,
                               threshold=args.threshold, keep_fraction=args.keep_fraction)
    persist.save(model, args.out)
    if args.trace_csv:
        _write_csv(args.trace_csv, ["epoch", "loss"], [(e + 1, v) for e, v in enumerate(trace)])
    final = trace[-1] if len(trace) else float("nan")
    print(f"{args.mode} augmentation, final loss {final:.6f} -> {args.out}")


def cmd_eval(args):
    model = persist.load(args.model)
    if not hasattr(model, "scores"):
        raise DataError(f"{args.model} does not hold a scoring model")
    ds = _load_dataset(args.data, args, args.protocol)
    report = evaluate(model, ds, args.metrics, which=args.split)
    Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    if args.text:
        Path(args.text).write_text(report.to_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())


def cmd_spectrum(args):
    spec = persist.load(args.spectral, "spectral")
    rows = spectrum_table(spec, args.lam, args.lambda_mf)
    cols = ["index", "sigma", "lrr_scaled", "mf_scaled", "lrr_ratio", "mf_ratio", "delta"]
    _write_csv(args.out, cols, [[r[c] for c in cols] for r in rows])
    print(f"{len(rows)} dimensions -> {args.out}")


# -- parser ---------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--log-level", default=argparse.SUPPRESS,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = _Parser(prog="linrec", description="Closed-form linear recommenders.")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    def split_flags(sp):
        sp.add_argument("--fractions", type=_float_list, default=[0.8, 0.1, 0.1])
        sp.add_argument("--holdout", type=float, default=0.2)

    sp = add("ingest", cmd_ingest, "read an interaction log into a binary matrix")
    sp.add_argument("--input", required=True)
    sp.add_argument("--delimiter", default=",")
    sp.add_argument("--header", action="store_true")
    sp.add_argument("--binarize-threshold", type=float, default=4.0)
    sp.add_argument("--min-user-items", type=int, default=5)
    sp.add_argument("--min-item-users", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("split", cmd_split, "split interactions into train / validation / test folds")
    sp.add_argument("--data", required=True)
    sp.add_argument("--protocol", choices=["strong", "loo"], default="strong")
    split_flags(sp)
    sp.add_argument("--out", required=True)

    sp = add("decompose", cmd_decompose, "eigendecompose the item Gram matrix")
    sp.add_argument("--data", required=True)
    sp.add_argument("--rank-tol", type=float, default=None)
    sp.add_argument("--out", required=True)

    sp = add("fit", cmd_fit, "fit a model")
    sp.add_argument("--model", required=True, choices=["lrr", "mf", "ease", "dlae", "wmf"])
    sp.add_argument("--data", required=True)
    sp.add_argument("--spectral")
    sp.add_argument("--k", type=int)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--iters", type=int, default=15)
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--out", required=True)

    sp = add("grid", cmd_grid, "grid search lambda x k for LRR")
    sp.add_argument("--spectral", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--lambdas", type=_float_list, required=True)
    sp.add_argument("--ks", type=_int_list, required=True)
    sp.add_argument("--metric", default="ndcg@100", type=lambda s: _metric_list(s)[0])
    sp.add_argument("--split", choices=["validation", "test"], default=None)
    split_flags(sp)
    sp.add_argument("--out", required=True)

    def train_flags(sp):
        sp.add_argument("--t-scale", type=float, default=1.0)
        sp.add_argument("--epochs", type=int, default=10)
        sp.add_argument("--batch", type=int, default=2048)
        sp.add_argument("--lr", type=float, default=0.01)
        sp.add_argument("--dropout", type=float, default=0.0)
        sp.add_argument("--trace-csv")

    sp = add("tune", cmd_tune, "tune per-dimension lambdas with the BPR loss")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--c", type=float, required=True)
    sp.add_argument("--lambda", dest="lam", type=float)
    train_flags(sp)
    sp.add_argument("--lambdas-csv")
    sp.add_argument("--out", required=True)

    sp = add("augment", cmd_augment, "fit head/tail or sparsification parameters")
    sp.add_argument("--model", required=True)
    sp.add_argument("--mode", choices=["ht", "sparse"], required=True)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--keep-fraction", type=float, default=0.1)
    sp.add_argument("--rmd", action="store_true")
    sp.add_argument("--data", required=True)
    train_flags(sp)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "evaluate a model on held-out folds")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--protocol", choices=["strong", "loo"], default=None)
    sp.add_argument("--metrics", type=_metric_list, default=["recall@20", "recall@50", "ndcg@100"])
    sp.add_argument("--split", choices=["validation", "test"], default="test")
    split_flags(sp)
    sp.add_argument("--text")
    sp.add_argument("--out", required=True)

    sp = add("spectrum", cmd_spectrum, "export shrinkage curves per singular value")
    sp.add_argument("--spectral", required=True)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--lambda-mf", type=float, required=True)
    sp.add_argument("--out", required=True)
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_USAGE

    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads or os.cpu_count() or 1
    try:
        with threadpool_limits(limits=threads):
            args.func(args)
    except UsageError as e:
        print(f"linrec: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"linrec: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"linrec: numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"linrec: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
