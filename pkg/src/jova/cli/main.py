"""Command line for multi-view drug-target affinity models.

Subcommands: featurize, split, train, evaluate, predict, explain, screen, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from jova.cli.config import ConfigError, RunConfig, load_run_config, parse_pairs
from jova.cli.report import run_report
from jova.cli.runner import PREDICTION_HEADER, is_feature_cache, run_train
from jova.data import (
    FeatureStore,
    featurize_records,
    filter_by_threshold,
    load_dataset,
    load_feature_cache,
    make_folds,
    read_split_manifest,
    save_feature_cache,
    write_split_manifest,
)
from jova.errors import DataError, JovaError, MalformedRow, NumericalOverflow
from jova.featurizers import FeaturizerConfig
from jova.interpret import build_explanation, screen, write_explanations
from jova.metrics import concordance_index, r2, rmse
from jova.training import featurize_pair, load_model, predict_samples

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("jova")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _records_arg(p, required=True):
    p.add_argument("--data", required=required, help="interaction CSV or feature cache")
    p.add_argument("--threshold", type=int, default=0,
                   help="drop entities with at most this many interactions")
    p.add_argument("--transform", choices=["none", "pkd"], default="none",
                   help="convert nM affinities to pKd on load")


def build_parser() -> argparse.ArgumentParser:
    summary, _, exit_codes = __doc__.strip().split("\n\n")
    parser = _Parser(prog="jova", description=f"{summary}\n\n{exit_codes}",
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="featurize a dataset into a cache file")
    _records_arg(p)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=int, default=4)
    p.add_argument("--nbits", type=int, default=2048)
    p.add_argument("--ngram-n", type=int, default=3)
    p.add_argument("--ngram-stride", type=int, default=3)

    p = sub.add_parser("split", help="write a 5-fold split manifest")
    _records_arg(p)
    p.add_argument("--scheme", choices=["warm", "cold_drug", "cold_target"], default="warm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--valid-fraction", type=float, default=0.125)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="cross-validated training run")
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")
    p.add_argument("--data")
    p.add_argument("--scheme")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--folds", help="comma-separated fold indices")
    p.add_argument("--out-dir")
    p.add_argument("--max-steps", type=int)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset (never trains)")
    p.add_argument("--checkpoint", required=True)
    _records_arg(p)
    p.add_argument("--split", help="split manifest; restricts scoring to one fold and role")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--role", choices=["train", "valid", "test"], default="test")
    p.add_argument("--out", help="write per-record predictions here")

    p = sub.add_parser("predict", help="predict one compound-target affinity")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--smiles", required=True)
    p.add_argument("--sequence", required=True)

    p = sub.add_parser("explain", help="top-k segments for compound-target pairs")
    p.add_argument("--checkpoint", required=True)
    _records_arg(p)
    p.add_argument("--pair", action="append", required=True, metavar="CID,TID")
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--norm", choices=["l2", "l1"], default="l2")
    p.add_argument("--out", help="JSON-lines output (default: stdout)")

    p = sub.add_parser("screen", help="rank a compound library against one target")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--compounds", required=True, help="CSV with compound_id,smiles columns")
    p.add_argument("--target", "--target-id", dest="target_id", required=True,
                   help="target id used in the report")
    p.add_argument("--sequence", required=True, help="target amino-acid sequence")
    p.add_argument("--threshold", type=float, help="flag scores at or below this value")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="summary table and scatter plots from runs")
    p.add_argument("--in", dest="runs", nargs="+", required=True, metavar="DIR",
                   help="run directories or metrics.csv files")
    p.add_argument("--out", required=True)
    return parser


# --- helpers ----------------------------------------------------------------------

def _load_records(args):
    if is_feature_cache(args.data):
        store = load_feature_cache(args.data)
        records = store.records
    else:
        store = None
        records = load_dataset(args.data, None if args.transform == "none" else args.transform)
    if args.threshold:
        records = filter_by_threshold(records, args.threshold)
    return records, store


def _store_for(records, cached: FeatureStore | None, featurizer: FeaturizerConfig) -> FeatureStore:
    if cached is not None and cached.config == featurizer:
        cached.records = records
        return cached
    return featurize_records(records, featurizer)


def _train_overrides(args) -> dict:
    overrides = parse_pairs(args.set, "--set")
    direct = {"data": args.data, "scheme": args.scheme, "seeds": args.seeds,
              "folds": args.folds, "out_dir": args.out_dir, "max_steps": args.max_steps}
    lines = [f"{k}={v}" for k, v in direct.items() if v is not None]
    overrides.update(parse_pairs(lines, "flags"))
    return overrides


# --- commands ---------------------------------------------------------------------

def cmd_featurize(args) -> int:
    records, _ = _load_records(args)
    config = FeaturizerConfig(args.radius, args.nbits, args.ngram_n, args.ngram_stride)
    store = featurize_records(records, config)
    save_feature_cache(args.out, store)
    print(f"featurized {len(store.compounds)} compounds and {len(store.targets)} targets "
          f"({len(records)} records) -> {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    records, _ = _load_records(args)
    split = make_folds(records, args.scheme, args.seed, args.valid_fraction)
    write_split_manifest(args.out, split, len(records))
    sizes = " ".join(str(len(f.test)) for f in split.folds)
    print(f"{args.scheme} split, seed {args.seed}, test fold sizes: {sizes}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_run_config(args.config, _train_overrides(args))
    outcome = run_train(config)
    print(outcome.report.format_table())
    for fail in outcome.failures:
        print(f"seed {fail.seed} fold {fail.fold} failed: {fail.reason}", file=sys.stderr)
    return EXIT_NUMERIC if outcome.failures else EXIT_OK


def cmd_evaluate(args) -> int:
    model, featurizer, _ = load_model(args.checkpoint)
    records, cached = _load_records(args)
    indices = list(range(len(records)))
    if args.split:
        split = read_split_manifest(args.split)
        if not 0 <= args.fold < len(split.folds):
            raise UsageError(f"fold {args.fold} not in manifest")
        roles = split.role_of(args.fold)
        if len(roles) != len(records):
            raise DataError(f"manifest covers {len(roles)} records, dataset has {len(records)}")
        indices = [i for i in indices if roles[i] == args.role]
    store = _store_for(records, cached, featurizer)
    kinds = model.config.kinds
    pred = predict_samples(model, [store.sample(records[i], kinds) for i in indices])
    if not np.all(np.isfinite(pred)):
        raise NumericalOverflow("non-finite predictions")
    truth = np.array([records[i].affinity for i in indices])
    print(f"records {len(indices)}  rmse {rmse(pred, truth):.4f}  "
          f"ci {_or_nan(concordance_index, pred, truth):.4f}  r2 {_or_nan(r2, pred, truth):.4f}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PREDICTION_HEADER)
            for i, p in zip(indices, pred):
                r = records[i]
                w.writerow(["", "", args.fold if args.split else "", i, r.compound_id,
                            r.target_id, repr(r.affinity), repr(float(p))])
    return EXIT_OK


def _or_nan(fn, pred, truth) -> float:
    try:
        return fn(pred, truth)
    except JovaError:
        return float("nan")


def cmd_predict(args) -> int:
    model, featurizer, _ = load_model(args.checkpoint)
    sample = featurize_pair(args.smiles, args.sequence, featurizer, model.config.kinds)
    value = float(predict_samples(model, [sample])[0])
    if not np.isfinite(value):
        raise NumericalOverflow("non-finite prediction")
    print(repr(value))
    return EXIT_OK


def cmd_explain(args) -> int:
    if args.topk < 1:
        raise UsageError("--topk must be at least 1")
    model, featurizer, _ = load_model(args.checkpoint)
    records, cached = _load_records(args)
    by_pair = {(r.compound_id, r.target_id): r for r in records}
    wanted = []
    for item in args.pair:
        cid, sep, tid = item.partition(",")
        if not sep:
            raise UsageError(f"--pair expects CID,TID, got {item!r}")
        if (cid, tid) not in by_pair:
            raise DataError(f"pair {cid},{tid} not in {args.data}")
        wanted.append(by_pair[(cid, tid)])
    store = _store_for(wanted, cached, featurizer)
    kinds = model.config.kinds
    explanations = [build_explanation(model, store.sample(r, kinds), r.compound_id, r.target_id,
                                      args.topk, args.norm) for r in wanted]
    if args.out:
        write_explanations(args.out, explanations)
    else:
        for e in explanations:
            print(e.to_json())
    return EXIT_OK


def cmd_screen(args) -> int:
    model, featurizer, _ = load_model(args.checkpoint)
    compounds = []
    with open(args.compounds, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"compound_id", "smiles"} <= set(reader.fieldnames):
            raise MalformedRow(f"{args.compounds}: need compound_id and smiles columns", line=1)
        for row in reader:
            compounds.append((row["compound_id"], row["smiles"]))
    report = screen(compounds, args.target_id, args.sequence, model, featurizer, args.threshold)
    report.write_csv(args.out)
    print(f"screened {len(report.entries)} compounds against {args.target_id}"
          f" ({len(report.skipped)} skipped) -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = run_report(args.runs, args.out)
    print(report.format_table())
    return EXIT_OK


COMMANDS = {
    "featurize": cmd_featurize, "split": cmd_split, "train": cmd_train,
    "evaluate": cmd_evaluate, "predict": cmd_predict, "explain": cmd_explain,
    "screen": cmd_screen, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"jova {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalOverflow as exc:
        print(f"jova {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (JovaError, OSError, KeyError) as exc:
        print(f"jova {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
