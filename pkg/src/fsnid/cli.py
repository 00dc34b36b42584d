"""Command-line interface: ``fsnid {select,classify,synth,bench,oracle,accept}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .classify import (
    ClassifierConfig,
    ClassifierError,
    evaluate,
    train_classifier,
    train_sequence_classifier,
)
from .estimation import EstimationError, EstimatorConfig
from .ingest import DataError, load_csv, normalize, normalize_split, split, write_csv
from .selection import SelectionError, run_fsnid
from .synthetic import KINDS, OracleError, SyntheticSpec, generate, plugin_mi

log = logging.getLogger("fsnid")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class UsageError(ValueError):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FSNID_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"FSNID_SEED must be an integer, got {env!r}") from None


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return v


# ----------------------------------------------------------------------------- select


def _estimator_config(args, seed: int) -> EstimatorConfig:
    steps = args.steps if args.steps is not None else (20_000 if args.temporal else 10_000)
    return EstimatorConfig(
        batch_size=args.batch_size, steps=steps, tail_window=min(args.tail_window, steps),
        learning_rate=args.lr, seed=seed, temporal=args.temporal, seq_len=args.seq_len,
        repeats=args.repeats, jobs=args.jobs, hidden=args.hidden,
    )


def cmd_select(args) -> int:
    seed = _seed(args)
    d = normalize(load_csv(args.input, args.label_col, args.pin_benign))
    cfg = _estimator_config(args, seed)
    order = None
    if args.order_seed is not None:
        order = np.random.default_rng(args.order_seed).permutation(d.n_features).tolist()

    def progress(dec):
        log.info("%s: phi=%.4f stat=%.2f %s", dec.name, dec.phi.mean, dec.statistic,
                 "kept" if dec.included else "dropped")

    report = run_fsnid(d, cfg, order=order, alpha=args.alpha, progress=progress)
    _emit(report.to_dict(), args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------- classify


def cmd_classify(args) -> int:
    seed = _seed(args)
    d = load_csv(args.input, args.label_col, args.pin_benign)
    if args.features and args.from_report:
        raise UsageError("use either --features or --from-report, not both")
    if args.from_report:
        try:
            names = json.loads(Path(args.from_report).read_text(encoding="utf-8"))["selected"]
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read a selection report from {args.from_report}: {exc}")
        missing = [n for n in names if n not in d.feature_names]
        if missing:
            raise UsageError(f"report features {missing} are not columns of {args.input}")
        if not names:
            raise UsageError("the report selected no features; nothing to classify with")
    elif args.features:
        names = _csv_list(args.features)
    else:
        names = list(d.feature_names)
    cols = d.column_index(names)
    sp = normalize_split(split(d, args.split))
    cfg = ClassifierConfig(learning_rate=args.lr, epochs=args.epochs,
                           batch_size=args.batch_size, seed=seed, hidden=args.hidden)
    if args.temporal:
        model = train_sequence_classifier(sp.train, cols, args.seq_len, cfg)
    else:
        model = train_classifier(sp.train, cols, cfg)
    m = evaluate(model, sp.test)
    _emit(dict(m.to_dict(), features=list(model.col_names),
               final_loss=model.losses[-1]), args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    spec = SyntheticSpec(kind=args.kind, rows=args.rows, noise_features=args.noise,
                         seed=_seed(args), bench_features=args.bench_features)
    d, ann = generate(spec)
    out = Path(args.out)
    write_csv(d, out, label_column=args.label_col)
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps(dict(ann.to_dict(), rows=spec.rows, seed=spec.seed,
                                       label_column=args.label_col), indent=2) + "\n",
                       encoding="utf-8")
    log.info("wrote %s and %s", out, sidecar)
    return EXIT_OK


# ----------------------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    counts = [int(c) for c in _csv_list(args.counts)]
    cfg = EstimatorConfig(batch_size=args.batch_size, steps=args.steps,
                          tail_window=min(args.tail_window, args.steps),
                          seed=_seed(args), temporal=args.temporal, seq_len=args.seq_len,
                          repeats=args.repeats, jobs=1)
    result = bench_mod.run_bench(counts, cfg, rows=args.rows, seed=_seed(args))
    if args.csv:
        result.write_csv(args.csv)
    _emit(result.to_dict(), args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------- oracle


def cmd_oracle(args) -> int:
    d = load_csv(args.input, args.label_col)
    target = None if args.target is None else d.column_index([args.target])[0]
    subsets = args.subset or [",".join(n for n in d.feature_names if n != args.target)]
    values = []
    for text in subsets:
        names = _csv_list(text)
        values.append({"subset": names,
                       "mi_nats": plugin_mi(d, d.column_index(names), target)})
    _emit({"target": args.target or args.label_col, "values": values}, args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------- accept


def cmd_accept(args) -> int:
    from .acceptance import ALL, SUITES, UnknownSuite, run_acceptance

    try:
        summary = run_acceptance(args.suite, echo=lambda line: print(line, file=sys.stderr))
    except UnknownSuite:
        raise UsageError(
            f"unknown suite {args.suite!r}; available: {', '.join([*SUITES, ALL])}") from None
    _emit(summary, args.out)
    return EXIT_OK if summary["passed"] else EXIT_INPUT


# ----------------------------------------------------------------------------- parser


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    # show defaults, except for flags that are off or unset by default
    def _get_help_string(self, action):
        if action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


def _add_common(p, label=True):
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: $FSNID_SEED, else 0)")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    if label:
        p.add_argument("--input", required=True, help="CSV file with a header row")
        p.add_argument("--label-col", required=True, help="name of the class column")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fsnid",
        description="Transfer-entropy feature selection for intrusion-detection data.",
        formatter_class=_HelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    fmt = _HelpFormatter

    p = sub.add_parser("select", help="run feature selection", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--pin-benign", default=None, help="label value to force to class 0")
    p.add_argument("--temporal", action="store_true", help="use the recurrent estimator")
    p.add_argument("--seq-len", type=_positive_int, default=10, help="window length s")
    p.add_argument("--batch-size", type=_positive_int, default=100, help="b")
    p.add_argument("--steps", type=_positive_int, default=None,
                   help="N (default 10000, or 20000 with --temporal)")
    p.add_argument("--tail-window", type=_positive_int, default=200,
                   help="steps averaged for the final bound")
    p.add_argument("--lr", type=float, default=1e-4, help="estimator learning rate")
    p.add_argument("--repeats", type=_positive_int, default=5, help="R, runs per feature")
    p.add_argument("--alpha", type=_fraction, default=0.05, help="test significance level")
    p.add_argument("--order-seed", type=int, default=None,
                   help="visit features in a seeded random order instead of column order")
    p.add_argument("--hidden", type=_positive_int, default=50, help="hidden units")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1,
                   help="parallel estimator threads")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("classify", help="train and score a classifier", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--pin-benign", default=None, help="label value to force to class 0")
    p.add_argument("--features", default=None, help="comma-separated feature names")
    p.add_argument("--from-report", default=None, help="use 'selected' from a select report")
    p.add_argument("--split", type=_fraction, default=0.8, help="train fraction (time order)")
    p.add_argument("--epochs", type=_positive_int, default=100, help="passes over the data")
    p.add_argument("--lr", type=float, default=0.01, help="SGD learning rate")
    p.add_argument("--batch-size", type=_positive_int, default=32, help="SGD minibatch size")
    p.add_argument("--hidden", type=_positive_int, default=50, help="hidden units")
    p.add_argument("--temporal", action="store_true", help="recurrent window classifier")
    p.add_argument("--seq-len", type=_positive_int, default=10, help="window length s")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("synth", help="write a synthetic dataset", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: $FSNID_SEED, else 0)")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--rows", type=_positive_int, default=4000, help="rows to generate")
    p.add_argument("--noise", type=int, default=0, help="extra independent binary columns")
    p.add_argument("--bench-features", type=_positive_int, default=8,
                   help="column count for bench-binary")
    p.add_argument("--label-col", default="y", help="name of the written class column")
    p.add_argument("--out", required=True, help="CSV path; annotation goes next to it")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time selection against feature count",
                       formatter_class=fmt)
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: $FSNID_SEED, else 0)")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p.add_argument("--counts", default="8,16,32,64", help="ascending feature counts")
    p.add_argument("--rows", type=_positive_int, default=500, help="rows per dataset")
    p.add_argument("--batch-size", type=_positive_int, default=10, help="b")
    p.add_argument("--steps", type=_positive_int, default=100, help="N")
    p.add_argument("--tail-window", type=_positive_int, default=20,
                   help="steps averaged for the final bound")
    p.add_argument("--repeats", type=_positive_int, default=5, help="R, runs per feature")
    p.add_argument("--temporal", action="store_true", help="use the recurrent estimator")
    p.add_argument("--seq-len", type=_positive_int, default=10, help="window length s")
    p.add_argument("--csv", default=None, help="also write the timing points as CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="plug-in MI of discrete columns", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--subset", action="append", default=None,
                   help="comma-separated names; repeatable; '' is the empty set "
                        "(default: all features)")
    p.add_argument("--target", default=None,
                   help="feature column to use as target instead of the label")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("accept", help="run an acceptance suite", formatter_class=fmt)
    p.add_argument("suite", help="suite name, or 'all'")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_accept)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (EstimationError, FloatingPointError) as exc:
        print(f"fsnid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, SelectionError, ClassifierError, OracleError, UsageError,
            ValueError, OSError) as exc:
        print(f"fsnid: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
