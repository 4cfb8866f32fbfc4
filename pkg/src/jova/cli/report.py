"""Summary tables and scatter plots from finished runs."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

from jova.errors import MalformedRow
from jova.metrics import MetricsReport

SVG_SIZE = 400
SVG_MARGIN = 40


def scatter_svg(truth, pred, title: str = "") -> str:
    """A self-contained SVG of predicted vs. true affinity with the y = x line.

    Both axes share one scale, so a perfect prediction sits on the diagonal.
    Each point carries its values in ``data-truth``/``data-pred``.
    """
    values = list(truth) + list(pred)
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = SVG_SIZE - 2 * SVG_MARGIN

    def sx(v):
        return SVG_MARGIN + (v - lo) / (hi - lo) * span

    def sy(v):
        return SVG_SIZE - SVG_MARGIN - (v - lo) / (hi - lo) * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
        f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
        f'<rect width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>',
        f'<text x="{SVG_SIZE / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line class="axis" x1="{sx(lo)}" y1="{sy(lo)}" x2="{sx(hi)}" y2="{sy(lo)}" stroke="black"/>',
        f'<line class="axis" x1="{sx(lo)}" y1="{sy(lo)}" x2="{sx(lo)}" y2="{sy(hi)}" stroke="black"/>',
        f'<line class="diagonal" x1="{sx(lo)}" y1="{sy(lo)}" x2="{sx(hi)}" y2="{sy(hi)}" '
        'stroke="gray" stroke-dasharray="4 4"/>',
        f'<text x="{SVG_SIZE / 2}" y="{SVG_SIZE - 8}" text-anchor="middle" font-size="12">true</text>',
        f'<text x="12" y="{SVG_SIZE / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {SVG_SIZE / 2})">predicted</text>',
        f'<text x="{sx(lo)}" y="{sy(lo) + 14}" font-size="10">{lo:.2f}</text>',
        f'<text x="{sx(hi)}" y="{sy(lo) + 14}" text-anchor="end" font-size="10">{hi:.2f}</text>',
    ]
    for t, p in zip(truth, pred):
        parts.append(f'<circle cx="{sx(t):.4f}" cy="{sy(p):.4f}" r="2.5" fill="steelblue" '
                     f'fill-opacity="0.6" data-truth="{t!r}" data-pred="{p!r}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def read_predictions(path) -> dict[str, tuple[list[float], list[float]]]:
    """scheme -> (truth, prediction) lists from a ``predictions.csv``."""
    out: dict[str, tuple[list, list]] = defaultdict(lambda: ([], []))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for line, row in enumerate(reader, start=2):
            try:
                truth, pred = out[row["scheme"]]
                truth.append(float(row["truth"]))
                pred.append(float(row["prediction"]))
            except (KeyError, ValueError, TypeError):
                raise MalformedRow(f"{path}: bad prediction row", line=line) from None
    return dict(out)


def run_report(run_dirs, out_dir) -> MetricsReport:
    """Merge ``metrics.csv`` (and ``predictions.csv``) from ``run_dirs``.

    Writes ``summary.txt`` with a mean (std) line per scheme and one
    ``scatter_<scheme>.svg`` per scheme with predictions.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    merged = MetricsReport()
    points: dict[str, tuple[list, list]] = defaultdict(lambda: ([], []))
    for d in run_dirs:
        d = Path(d)
        metrics = d / "metrics.csv" if d.is_dir() else d
        merged.rows.extend(MetricsReport.read_csv(metrics).rows)
        preds = metrics.parent / "predictions.csv"
        if preds.exists():
            for scheme, (t, p) in read_predictions(preds).items():
                points[scheme][0].extend(t)
                points[scheme][1].extend(p)
    (out / "summary.txt").write_text(merged.format_table() + "\n", encoding="utf-8")
    for scheme, (t, p) in sorted(points.items()):
        (out / f"scatter_{scheme}.svg").write_text(scatter_svg(t, p, scheme), encoding="utf-8")
    return merged
