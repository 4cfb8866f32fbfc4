"""Interaction records, threshold filtering, cross-validation splits and the
on-disk feature cache / split manifest formats."""
from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from jova.errors import (
    DuplicatePair,
    EmptyAfterFilter,
    FormatError,
    InfeasibleSplit,
    InfeasibleWarmSplit,
    MalformedRow,
)
from jova.featurizers import (
    FeaturizerConfig,
    SegmentMatrix,
    ViewKind,
    featurize_compound,
    featurize_target,
)
from jova.tensor.checkpoint import decode_manifest, encode_manifest

HEADER = ["compound_id", "smiles", "target_id", "sequence", "affinity"]
SCHEMES = ("warm", "cold_drug", "cold_target")
NUM_FOLDS = 5


@dataclass(frozen=True)
class InteractionRecord:
    compound_id: str
    smiles: str
    target_id: str
    sequence: str
    affinity: float


def kd_to_pkd(value_nm: float) -> float:
    """-log10(Kd / 1e9) for a dissociation constant given in nM."""
    return -math.log10(value_nm / 1e9)


def load_dataset(path, transform: str | None = None) -> list[InteractionRecord]:
    """Read ``compound_id,smiles,target_id,sequence,affinity`` rows.

    ``transform="pkd"`` converts nM affinities with :func:`kd_to_pkd`; no
    transform is ever applied implicitly.
    """
    records = []
    seen: dict[tuple[str, str], int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MalformedRow("file is empty; expected a header", line=1)
        if [h.strip() for h in header] != HEADER:
            raise MalformedRow(f"header must be {','.join(HEADER)}", line=1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADER):
                raise MalformedRow(f"expected {len(HEADER)} columns, got {len(row)}", line=line)
            cid, smiles, tid, seq, raw = (c.strip() for c in row)
            if not cid or not tid:
                raise MalformedRow("compound_id and target_id must be non-empty", line=line)
            try:
                affinity = float(raw)
            except ValueError:
                raise MalformedRow(f"affinity {raw!r} is not a number", line=line) from None
            if transform == "pkd":
                if affinity <= 0:
                    raise MalformedRow("pKd transform needs a positive affinity", line=line)
                affinity = kd_to_pkd(affinity)
            elif transform is not None:
                raise ValueError(f"unknown transform {transform!r}")
            if not math.isfinite(affinity):
                raise MalformedRow(f"affinity {raw!r} is not finite", line=line)
            key = (cid, tid)
            if key in seen:
                raise DuplicatePair(f"line {line}: pair {cid}/{tid} already seen on line {seen[key]}")
            seen[key] = line
            records.append(InteractionRecord(cid, smiles, tid, seq, affinity))
    return records


def write_dataset(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for r in records:
            writer.writerow([r.compound_id, r.smiles, r.target_id, r.sequence, repr(r.affinity)])


def filter_by_threshold(records, threshold: int) -> list[InteractionRecord]:
    """Drop compounds and targets with at most ``threshold`` records.

    Removal repeats until nothing changes, since dropping a compound lowers
    the counts of its targets and vice versa.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    current = list(records)
    while True:
        cc = Counter(r.compound_id for r in current)
        tc = Counter(r.target_id for r in current)
        kept = [r for r in current if cc[r.compound_id] > threshold and tc[r.target_id] > threshold]
        if len(kept) == len(current):
            break
        current = kept
    if records and not current:
        raise EmptyAfterFilter(f"no records survive threshold {threshold}")
    return current


# --- splits ---------------------------------------------------------------------

@dataclass
class Fold:
    train: list[int]
    valid: list[int]
    test: list[int]


@dataclass
class FoldSplit:
    scheme: str
    seed: int
    folds: list[Fold] = field(default_factory=list)

    def role_of(self, fold: int) -> dict[int, str]:
        f = self.folds[fold]
        roles = {i: "train" for i in f.train}
        roles.update({i: "valid" for i in f.valid})
        roles.update({i: "test" for i in f.test})
        return roles


def _entity_key(scheme: str):
    return (lambda r: r.compound_id) if scheme == "cold_drug" else (lambda r: r.target_id)


def _warm_test_folds(records, rng) -> list[int]:
    cc = Counter(r.compound_id for r in records)
    tc = Counter(r.target_id for r in records)
    lonely = sorted({r.compound_id for r in records if cc[r.compound_id] < 2}) + sorted(
        {r.target_id for r in records if tc[r.target_id] < 2})
    if lonely:
        shown = ", ".join(lonely[:10])
        raise InfeasibleWarmSplit(
            f"warm split needs every compound and target in >= 2 records; offending ids: {shown}",
            lonely)
    fold_of = [-1] * len(records)
    sizes = [0] * NUM_FOLDS
    placed_c = defaultdict(lambda: [0] * NUM_FOLDS)
    placed_t = defaultdict(lambda: [0] * NUM_FOLDS)
    left_c, left_t = Counter(cc), Counter(tc)
    for i in rng.permutation(len(records)):
        r = records[i]
        forbidden = set()
        for placed, left, key in ((placed_c, left_c, r.compound_id), (placed_t, left_t, r.target_id)):
            if left[key] == 1:
                used = [f for f in range(NUM_FOLDS) if placed[key][f]]
                if len(used) == 1:
                    # the last record must not join the only fold holding the others
                    forbidden.add(used[0])
        jitter = rng.random(NUM_FOLDS)
        choices = [f for f in range(NUM_FOLDS) if f not in forbidden]
        f = min(choices, key=lambda f: (placed_c[r.compound_id][f] + placed_t[r.target_id][f],
                                        sizes[f], jitter[f]))
        fold_of[i] = f
        sizes[f] += 1
        placed_c[r.compound_id][f] += 1
        placed_t[r.target_id][f] += 1
        left_c[r.compound_id] -= 1
        left_t[r.target_id] -= 1
    return fold_of


def _cold_test_folds(records, scheme, rng) -> list[int]:
    key = _entity_key(scheme)
    counts = Counter(key(r) for r in records)
    ids = sorted(counts)
    label = "compound" if scheme == "cold_drug" else "target"
    if len(ids) < NUM_FOLDS:
        raise InfeasibleSplit(
            f"{scheme} split needs at least {NUM_FOLDS} distinct {label} ids to form "
            f"{NUM_FOLDS} disjoint groups; found {len(ids)}", ids)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    shuffled.sort(key=lambda e: -counts[e])  # stable: ties keep the shuffled order
    group_of = {}
    totals = [0] * NUM_FOLDS
    for e in shuffled:
        f = min(range(NUM_FOLDS), key=lambda f: (totals[f], f))
        group_of[e] = f
        totals[f] += counts[e]
    return [group_of[key(r)] for r in records]


def _warm_validation(records, train, fraction, rng) -> tuple[list[int], list[int]]:
    target = int(round(len(train) * fraction))
    cc = Counter(records[i].compound_id for i in train)
    tc = Counter(records[i].target_id for i in train)
    valid = set()
    for i in rng.permutation(train):
        if len(valid) >= target:
            break
        r = records[int(i)]
        if cc[r.compound_id] >= 2 and tc[r.target_id] >= 2:
            valid.add(int(i))
            cc[r.compound_id] -= 1
            tc[r.target_id] -= 1
    return [i for i in train if i not in valid], sorted(valid)


def _cold_validation(records, train, scheme, fraction, rng):
    key = _entity_key(scheme)
    by_entity = defaultdict(list)
    for i in train:
        by_entity[key(records[i])].append(i)
    ids = sorted(by_entity)
    target = len(train) * fraction
    valid_ids = set()
    size = 0
    for e in (ids[i] for i in rng.permutation(len(ids))):
        if size >= target or len(valid_ids) >= len(ids) - 1:
            break
        valid_ids.add(e)
        size += len(by_entity[e])
    valid = sorted(i for e in valid_ids for i in by_entity[e])
    chosen = set(valid)
    return [i for i in train if i not in chosen], valid


def make_folds(records, scheme: str, seed: int, valid_fraction: float = 1 / 8) -> FoldSplit:
    """Five folds under ``scheme``; each fold's validation set is carved out
    of its training complement under the same constraint."""
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    records = list(records)
    if not records:
        raise InfeasibleSplit("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    if scheme == "warm":
        fold_of = _warm_test_folds(records, rng)
    else:
        fold_of = _cold_test_folds(records, scheme, rng)
    split = FoldSplit(scheme, seed)
    for f in range(NUM_FOLDS):
        test = [i for i, g in enumerate(fold_of) if g == f]
        rest = [i for i, g in enumerate(fold_of) if g != f]
        if scheme == "warm":
            train, valid = _warm_validation(records, rest, valid_fraction, rng)
        else:
            train, valid = _cold_validation(records, rest, scheme, valid_fraction, rng)
        split.folds.append(Fold(train, valid, test))
    return split


def check_split(records, split: FoldSplit) -> None:
    """Assert the partition and scheme properties of ``split``."""
    n = len(records)
    tests = [set(f.test) for f in split.folds]
    assert sum(len(t) for t in tests) == n and set().union(*tests) == set(range(n))
    for f in split.folds:
        assert set(f.train).isdisjoint(f.test) and set(f.valid).isdisjoint(f.test)
        assert set(f.train).isdisjoint(f.valid)
        assert len(f.train) + len(f.valid) + len(f.test) == n
        tc = {records[i].compound_id for i in f.train}
        tt = {records[i].target_id for i in f.train}
        held = [records[i] for i in f.test + f.valid]
        if split.scheme == "warm":
            assert all(r.compound_id in tc and r.target_id in tt for r in held)
        elif split.scheme == "cold_drug":
            assert all(r.compound_id not in tc for r in held)
        else:
            assert all(r.target_id not in tt for r in held)


def write_split_manifest(path, split: FoldSplit, num_records: int) -> None:
    """One ``index,fold,role`` line per record and fold."""
    lines = [f"# scheme={split.scheme} seed={split.seed} records={num_records}",
             "index,fold,role"]
    for f in range(len(split.folds)):
        roles = split.role_of(f)
        for i in range(num_records):
            lines.append(f"{i},{f},{roles[i]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_split_manifest(path) -> FoldSplit:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2 or not lines[0].startswith("# ") or lines[1] != "index,fold,role":
        raise FormatError("not a split manifest")
    meta = dict(item.split("=", 1) for item in lines[0][2:].split())
    split = FoldSplit(meta["scheme"], int(meta["seed"]))
    folds: dict[int, Fold] = {}
    for n, line in enumerate(lines[2:], start=3):
        try:
            idx, fold, role = line.split(",")
            fold_obj = folds.setdefault(int(fold), Fold([], [], []))
            {"train": fold_obj.train, "valid": fold_obj.valid, "test": fold_obj.test}[role].append(int(idx))
        except (ValueError, KeyError):
            raise MalformedRow(f"bad manifest line {line!r}", line=n) from None
    split.folds = [folds[f] for f in sorted(folds)]
    return split


# --- features ---------------------------------------------------------------------

@dataclass
class FeatureStore:
    """Featurized compounds and targets, shared by every record that uses them."""

    config: FeaturizerConfig
    compounds: dict[str, dict[ViewKind, SegmentMatrix]] = field(default_factory=dict)
    targets: dict[str, dict[ViewKind, SegmentMatrix]] = field(default_factory=dict)
    records: list[InteractionRecord] = field(default_factory=list)

    def sample(self, record: InteractionRecord, kinds=None) -> dict[ViewKind, SegmentMatrix]:
        views = dict(self.compounds[record.compound_id])
        views.update(self.targets[record.target_id])
        if kinds is not None:
            views = {k: views[k] for k in kinds}
        return views


def featurize_records(records, config: FeaturizerConfig = FeaturizerConfig()) -> FeatureStore:
    store = FeatureStore(config, records=list(records))
    for r in records:
        if r.compound_id not in store.compounds:
            store.compounds[r.compound_id] = featurize_compound(r.smiles, config)
        if r.target_id not in store.targets:
            store.targets[r.target_id] = featurize_target(r.sequence, config)
    return store


FEATURE_MAGIC = "JOVA-FEAT v1"


def save_feature_cache(path, store: FeatureStore) -> None:
    """Write ``store`` in the ``JOVA-FEAT v1`` container (see the README)."""
    c = store.config
    meta = {"radius": c.radius, "nbits": c.nbits, "ngram_n": c.ngram_n,
            "ngram_stride": c.ngram_stride, "records": len(store.records)}
    for i, r in enumerate(store.records):
        meta[f"record.{i}"] = "\t".join([r.compound_id, r.target_id, repr(r.affinity),
                                         r.smiles, r.sequence])
    arrays = []
    for section, entities in (("compound", store.compounds), ("target", store.targets)):
        for eid in sorted(entities):
            for kind in sorted(entities[eid], key=lambda k: k.value):
                mat = entities[eid][kind]
                base = f"{section}/{eid}/{kind.value}"
                arrays.append((f"{base}/rows", mat.rows))
                arrays.append((f"{base}/map", mat.segment_map))
                if mat.edges is not None:
                    arrays.append((f"{base}/edges", mat.edges))
    header, payload = encode_manifest(FEATURE_MAGIC, meta, arrays)
    Path(path).write_bytes(header + payload)


def load_feature_cache(path) -> FeatureStore:
    meta, arrays = decode_manifest(Path(path).read_bytes(), FEATURE_MAGIC)
    try:
        config = FeaturizerConfig(int(meta["radius"]), int(meta["nbits"]),
                                  int(meta["ngram_n"]), int(meta["ngram_stride"]))
        records = []
        for i in range(int(meta["records"])):
            cid, tid, aff, smiles, seq = meta[f"record.{i}"].split("\t")
            records.append(InteractionRecord(cid, smiles, tid, seq, float(aff)))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"feature cache metadata incomplete: {exc}") from exc
    parts: dict[tuple, dict] = defaultdict(dict)
    for name, arr in arrays:
        section, eid_kind = name.split("/", 1)
        eid, kind, what = eid_kind.rsplit("/", 2)
        parts[(section, eid, kind)][what] = arr
    store = FeatureStore(config, records=records)
    for (section, eid, kind), p in parts.items():
        view = ViewKind(kind)
        mat = SegmentMatrix(view, p["rows"], p["map"], edges=p.get("edges"))
        target = store.compounds if section == "compound" else store.targets
        target.setdefault(eid, {})[view] = mat
    return store
