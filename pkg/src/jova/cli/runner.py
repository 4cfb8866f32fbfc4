"""Cross-validated training runs: per seed and fold, train, checkpoint and score."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from jova.cli.config import RunConfig
from jova.data import (
    FEATURE_MAGIC,
    FeatureStore,
    InteractionRecord,
    featurize_records,
    filter_by_threshold,
    load_dataset,
    load_feature_cache,
    make_folds,
    write_split_manifest,
)
from jova.errors import EmptyAfterFilter, NumericalOverflow
from jova.metrics import MetricsReport
from jova.model import JovaModel
from jova.training import predict_samples, save_model, standardize_targets, train_model

log = logging.getLogger(__name__)

PREDICTION_HEADER = ["scheme", "seed", "fold", "index", "compound_id", "target_id", "truth", "prediction"]


@dataclass
class FoldFailure:
    seed: int
    fold: int
    reason: str


@dataclass
class RunOutcome:
    report: MetricsReport
    checkpoints: list[Path] = field(default_factory=list)
    failures: list[FoldFailure] = field(default_factory=list)
    out_dir: Path = Path(".")


def is_feature_cache(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(FEATURE_MAGIC)) == FEATURE_MAGIC.encode("ascii")


def load_store(config: RunConfig) -> FeatureStore:
    """Records (filtered) and their features, from a CSV or a feature cache."""
    if is_feature_cache(config.data):
        store = load_feature_cache(config.data)
        records = store.records
        if store.config != config.featurizer():
            log.info("using featurizer settings stored in %s", config.data)
    else:
        records = load_dataset(config.data, None if config.transform == "none" else config.transform)
        store = None
    records = filter_by_threshold(records, config.threshold) if config.threshold else list(records)
    if not records:
        raise EmptyAfterFilter(f"no records left after filtering at threshold {config.threshold}")
    if store is None:
        return featurize_records(records, config.featurizer())
    store.records = records
    return store


def run_train(config: RunConfig) -> RunOutcome:
    """Train every requested (seed, fold) and write the run directory.

    Layout under ``out_dir``: ``run.cfg``, ``splits/<scheme>_seed<s>.csv``,
    ``checkpoints/<scheme>_seed<s>_fold<f>.ckpt``, ``metrics.csv`` and
    ``predictions.csv``. A fold whose loss overflows is skipped and listed in
    ``failures``; the other folds still run.
    """
    config.validate()
    out = Path(config.out_dir)
    (out / "splits").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "run.cfg").write_text(config.to_text(), encoding="utf-8")
    store = load_store(config)
    records: list[InteractionRecord] = store.records
    y = np.array([r.affinity for r in records], dtype=np.float64)
    outcome = RunOutcome(MetricsReport(), out_dir=out)
    prediction_rows = []
    for seed in config.seeds:
        split = make_folds(records, config.scheme, seed, config.valid_fraction)
        write_split_manifest(out / "splits" / f"{config.scheme}_seed{seed}.csv", split, len(records))
        for f in config.folds:
            fold = split.folds[f]
            model_config = config.model_config(seed * 100 + f)
            samples = [store.sample(r, model_config.kinds) for r in records]
            standardize_targets(model_config, y[fold.train])
            model = JovaModel(model_config)
            try:
                train_model(model, [samples[i] for i in fold.train], y[fold.train],
                            config.train_settings(seed * 100 + f),
                            [samples[i] for i in fold.valid], y[fold.valid])
                pred = predict_samples(model, [samples[i] for i in fold.test])
                if not np.all(np.isfinite(pred)):
                    raise NumericalOverflow("non-finite test predictions")
            except NumericalOverflow as exc:
                log.error("seed %d fold %d aborted: %s", seed, f, exc)
                outcome.failures.append(FoldFailure(seed, f, str(exc)))
                continue
            path = out / "checkpoints" / f"{config.scheme}_seed{seed}_fold{f}.ckpt"
            save_model(path, model, store.config,
                       {"scheme": config.scheme, "seed": seed, "fold": f})
            outcome.checkpoints.append(path)
            row = outcome.report.add(config.scheme, f, seed, pred, y[fold.test])
            log.info("seed %d fold %d: rmse %.4f ci %.4f", seed, f, row.rmse, row.ci)
            for i, p in zip(fold.test, pred):
                r = records[i]
                prediction_rows.append([config.scheme, seed, f, i, r.compound_id, r.target_id,
                                        repr(r.affinity), repr(float(p))])
    outcome.report.write_csv(out / "metrics.csv")
    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_HEADER)
        w.writerows(prediction_rows)
    if outcome.failures:
        with open(out / "failures.txt", "w", encoding="utf-8") as fh:
            for fail in outcome.failures:
                fh.write(f"seed={fail.seed} fold={fail.fold} {fail.reason}\n")
    return outcome
