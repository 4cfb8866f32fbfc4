"""Regression metrics and fold/seed aggregation."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from jova.errors import EmptyInput, MalformedRow, NoComparablePairs, ZeroVariance


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions, {truth.size} labels")
    if pred.size == 0:
        raise EmptyInput("metrics need at least one value")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def _concordance_counts(pred, truth) -> tuple[int, int]:
    """(2 * concordant + tied-prediction pairs, comparable pairs).

    Sort by label; sweep groups of equal labels, querying a Fenwick tree
    over prediction ranks that holds every strictly smaller label.
    """
    ranks = np.unique(pred, return_inverse=True)[1].reshape(-1) + 1
    size = int(ranks.max())
    tree = np.zeros(size + 1, dtype=np.int64)

    def prefix(i):
        total = 0
        while i > 0:
            total += tree[i]
            i -= i & -i
        return total

    def insert(i):
        while i <= size:
            tree[i] += 1
            i += i & -i

    order = np.argsort(truth, kind="stable")
    score2 = 0
    comparable = 0
    inserted = 0
    start = 0
    n = len(order)
    while start < n:
        end = start
        while end < n and truth[order[end]] == truth[order[start]]:
            end += 1
        group = order[start:end]
        for i in group:
            below = prefix(ranks[i] - 1)
            tied = prefix(ranks[i]) - below
            score2 += 2 * below + tied
            comparable += inserted
        for i in group:
            insert(ranks[i])
        inserted += len(group)
        start = end
    return score2, comparable


def concordance_index(pred, truth) -> float:
    """Fraction of label-ordered pairs whose predictions agree in order.

    Pairs with equal labels are skipped; tied predictions score 0.5.
    """
    pred, truth = _pair(pred, truth)
    if pred.size < 2:
        raise NoComparablePairs("need at least two values")
    score2, comparable = _concordance_counts(pred, truth)
    if comparable == 0:
        raise NoComparablePairs("all labels are equal")
    return float(score2 / 2 / comparable)


def pearson(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    pc = pred - pred.mean()
    tc = truth - truth.mean()
    denom = np.sqrt((pc * pc).sum() * (tc * tc).sum())
    if denom == 0:
        raise ZeroVariance("predictions or labels are constant")
    return float((pc * tc).sum() / denom)


def r2(pred, truth, squared: bool = True) -> float:
    """Squared Pearson correlation; ``squared=False`` gives the raw coefficient."""
    r = pearson(pred, truth)
    return r * r if squared else r


# --- reporting ------------------------------------------------------------------

METRIC_FIELDS = ("rmse", "ci", "r2")
REPORT_HEADER = ["scheme", "fold", "seed", "rmse", "ci", "r2"]


@dataclass
class MetricsRow:
    scheme: str
    fold: int
    seed: int
    rmse: float
    ci: float
    r2: float


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)

    def add(self, scheme, fold, seed, pred, truth) -> MetricsRow:
        row = MetricsRow(scheme, fold, seed, rmse(pred, truth),
                         _safe(concordance_index, pred, truth), _safe(r2, pred, truth))
        self.rows.append(row)
        return row

    def aggregate(self) -> dict[str, dict[str, tuple[float, float]]]:
        """Per scheme: metric -> (mean, population std).

        The mean averages folds within each seed, then the seeds; the std is
        taken over all fold-seed values.
        """
        out = {}
        by_scheme = defaultdict(list)
        for r in self.rows:
            by_scheme[r.scheme].append(r)
        for scheme, rows in by_scheme.items():
            stats = {}
            for name in METRIC_FIELDS:
                per_seed = defaultdict(list)
                for r in rows:
                    per_seed[r.seed].append(getattr(r, name))
                seed_means = [float(np.mean(v)) for _, v in sorted(per_seed.items())]
                values = np.array([getattr(r, name) for r in rows])
                stats[name] = (float(np.mean(seed_means)), float(np.std(values)))
            out[scheme] = stats
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for r in self.rows:
                w.writerow([r.scheme, r.fold, r.seed, repr(float(r.rmse)), repr(float(r.ci)), repr(float(r.r2))])

    @classmethod
    def read_csv(cls, path) -> "MetricsReport":
        report = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            if next(reader, None) != REPORT_HEADER:
                raise MalformedRow(f"{path}: header must be {','.join(REPORT_HEADER)}", line=1)
            for line, row in enumerate(reader, start=2):
                try:
                    scheme, fold, seed, a, b, c = row
                    report.rows.append(MetricsRow(scheme, int(fold), int(seed),
                                                  float(a), float(b), float(c)))
                except ValueError:
                    raise MalformedRow(f"{path}: cannot read {row!r}", line=line) from None
        return report

    def format_table(self) -> str:
        """Mean (std) table, one line per scheme."""
        lines = [f"{'scheme':<12} {'RMSE':>18} {'CI':>18} {'R2':>18}"]
        for scheme, stats in self.aggregate().items():
            cells = [f"{m:.3f} ({s:.3f})" for m, s in (stats[k] for k in METRIC_FIELDS)]
            lines.append(f"{scheme:<12} " + " ".join(f"{c:>18}" for c in cells))
        return "\n".join(lines)


def _safe(fn, pred, truth) -> float:
    try:
        return fn(pred, truth)
    except (NoComparablePairs, ZeroVariance):
        return float("nan")
