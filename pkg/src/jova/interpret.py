"""Segment-norm explanations and ranked virtual screens."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

from jova.errors import JovaError
from jova.model import JovaModel, RankedSegment, collate, explain_segments
from jova.training import featurize_pair

log = logging.getLogger(__name__)


@dataclass
class Explanation:
    compound_id: str
    target_id: str
    predicted_affinity: float
    compound_topk: list[dict] = field(default_factory=list)
    target_topk: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "compound_id": self.compound_id,
            "target_id": self.target_id,
            "predicted_affinity": self.predicted_affinity,
            "compound_topk": self.compound_topk,
            "target_topk": self.target_topk,
        }, sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> "Explanation":
        return cls(**json.loads(line))


def _compound_entry(seg: RankedSegment) -> dict:
    # vector views have one whole-molecule segment: no single atom to name
    atom = None if seg.is_global else seg.span[0]
    return {"view": seg.view.value, "atom_index": atom, "norm": seg.norm, "rank": seg.rank}


def _target_entry(seg: RankedSegment) -> dict:
    residues = None if seg.is_global else [seg.span[0], seg.span[1]]
    return {"view": seg.view.value, "residue_range": residues, "norm": seg.norm, "rank": seg.rank}


def build_explanation(model: JovaModel, sample: dict, compound_id: str, target_id: str,
                      k: int = 10, norm: str = "l2") -> Explanation:
    """Forward one pair and rank its updated segments per entity."""
    batch = collate([sample], model.config.kinds)
    result = model.forward(batch)
    ranked = explain_segments(result.updated.data[0], result.joint.view_spans[0],
                              batch.segment_maps[0], model.config.kinds, k, norm)
    return Explanation(
        compound_id, target_id, float(result.prediction.data[0]),
        [_compound_entry(s) for s in ranked["compound"]],
        [_target_entry(s) for s in ranked["target"]],
    )


def write_explanations(path, explanations) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in explanations:
            fh.write(e.to_json() + "\n")


def read_explanations(path) -> list[Explanation]:
    with open(path, encoding="utf-8") as fh:
        return [Explanation.from_json(line) for line in fh if line.strip()]


# --- screening ------------------------------------------------------------------

@dataclass
class ScreenReport:
    target_id: str
    entries: list[tuple[int, str, float]] = field(default_factory=list)
    threshold: float | None = None
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def flagged(self, score: float) -> bool:
        return self.threshold is not None and score <= self.threshold

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "compound_id", "score", "flag"])
            for rank, cid, score in self.entries:
                w.writerow([rank, cid, repr(score), int(self.flagged(score))])


def screen(compounds, target_id: str, sequence: str, model: JovaModel, featurizer,
           threshold: float | None = None, batch_size: int = 1) -> ScreenReport:
    """Score ``(compound_id, smiles)`` pairs against one target, lowest first.

    Lower scores mean stronger predicted binding (KIBA convention); compounds
    at or below ``threshold`` are flagged. Compounds that fail to parse are
    skipped and logged.

    The default ``batch_size=1`` makes each score independent of the rest of
    the library: batched float32 matmuls can round differently per row, which
    would break exact ties between identical compounds.
    """
    report = ScreenReport(target_id, threshold=threshold)
    kinds = model.config.kinds
    ids, samples = [], []
    for cid, smiles in compounds:
        try:
            samples.append(featurize_pair(smiles, sequence, featurizer, kinds))
            ids.append(cid)
        except JovaError as exc:
            log.warning("skipping %s: %s", cid, exc)
            report.skipped.append((cid, str(exc)))
    scores = []
    for start in range(0, len(samples), batch_size):
        batch = collate(samples[start:start + batch_size], kinds)
        scores.extend(float(v) for v in model(batch).data)
    order = sorted(range(len(ids)), key=lambda i: (scores[i], i))
    report.entries = [(rank + 1, ids[i], scores[i]) for rank, i in enumerate(order)]
    return report

