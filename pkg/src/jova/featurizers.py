"""Unimodal views of compounds and targets.

Each featurizer returns a :class:`SegmentMatrix`: one row per segment plus a
provenance range for every row. Vector views (fingerprint, composition)
always have a single whole-entity row.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import product

import numpy as np

from jova._hashing import hash_ints
from jova.errors import InvalidResidue, SequenceTooShort
from jova.smiles import ELEMENTS, MolecularGraph, canonical_invariants

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
RESIDUE_INDEX = {aa: i for i, aa in enumerate(AMINO_ACIDS)}

MAX_DEGREE = 5
MAX_HYDROGENS = 4
ATOM_FEATURE_DIM = len(ELEMENTS) + (MAX_DEGREE + 1) + (MAX_HYDROGENS + 1) + 2
PSC_DIM = 20 + 20 ** 2 + 20 ** 3


class ViewKind(str, Enum):
    COMPOUND_FINGERPRINT = "CompoundFingerprint"
    COMPOUND_GRAPH = "CompoundGraph"
    TARGET_COMPOSITION = "TargetComposition"
    TARGET_NGRAM = "TargetNgram"

    @property
    def entity(self) -> str:
        return "compound" if self.value.startswith("Compound") else "target"

    @property
    def is_vector(self) -> bool:
        return self in (ViewKind.COMPOUND_FINGERPRINT, ViewKind.TARGET_COMPOSITION)


@dataclass
class SegmentMatrix:
    """Rows of one view for one entity.

    ``segment_map[i]`` is the half-open ``[start, end)`` range of atoms or
    residues that row ``i`` came from; for vector views it spans the whole
    entity. ``edges`` holds the bond list for the graph view only.
    """

    view: ViewKind
    rows: np.ndarray
    segment_map: np.ndarray
    edges: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.rows = np.asarray(self.rows)
        self.segment_map = np.asarray(self.segment_map, dtype=np.int64).reshape(-1, 2)
        if self.rows.ndim != 2 or self.rows.shape[0] < 1:
            raise ValueError(f"{self.view.value}: rows must be a non-empty 2-D array")
        if self.segment_map.shape[0] != self.rows.shape[0]:
            raise ValueError("segment_map needs one range per row")
        if self.view.is_vector and self.rows.shape[0] != 1:
            raise ValueError(f"{self.view.value} is a vector view and must have one row")
        if self.edges is not None:
            self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)

    @property
    def num_segments(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SegmentMatrix):
            return NotImplemented
        same_edges = (self.edges is None and other.edges is None) or (
            self.edges is not None and other.edges is not None
            and np.array_equal(self.edges, other.edges))
        return (self.view == other.view and self.rows.dtype == other.rows.dtype
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.segment_map, other.segment_map) and same_edges)


# --- compound views -------------------------------------------------------

def morgan_identifiers(graph: MolecularGraph, radius: int) -> list[int]:
    """Surviving Morgan environment identifiers, sorted ascending.

    Round 0 keeps every atom's invariant. Later rounds hash the atom's
    previous identifier with its sorted (bond order, neighbour identifier)
    pairs; an environment whose bond set was already produced earlier (or
    by a smaller identifier in the same round) is dropped.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    n = graph.num_atoms
    ids = canonical_invariants(graph)
    incident = [frozenset(graph.incident_bonds(i)) for i in range(n)]
    neighbour_orders = [
        [(int(graph.bonds[k].order), graph.bonds[k].other(i)) for k in graph.incident_bonds(i)]
        for i in range(n)
    ]
    kept = set(ids)
    envs = [frozenset() for _ in range(n)]
    seen = {frozenset()}
    for r in range(1, radius + 1):
        new_ids = []
        new_envs = []
        for i in range(n):
            pairs = sorted((order, ids[j]) for order, j in neighbour_orders[i])
            flat = [r, ids[i]]
            for order, code in pairs:
                flat += [order, code]
            new_ids.append(hash_ints(flat))
            env = set(incident[i])
            for _, j in neighbour_orders[i]:
                env |= envs[j]
            new_envs.append(frozenset(env))
        for i in sorted(range(n), key=lambda a: new_ids[a]):
            if new_envs[i] not in seen:
                seen.add(new_envs[i])
                kept.add(new_ids[i])
        ids, envs = new_ids, new_envs
    return sorted(kept)


def ecfp(graph: MolecularGraph, radius: int = 4, nbits: int = 2048) -> SegmentMatrix:
    """Folded extended-connectivity fingerprint (ECFP8 at the default radius 4)."""
    if nbits <= 0 or nbits & (nbits - 1):
        raise ValueError("nbits must be a positive power of two")
    bits = np.zeros((1, nbits), dtype=np.float64)
    for ident in morgan_identifiers(graph, radius):
        bits[0, ident % nbits] = 1.0
    return SegmentMatrix(ViewKind.COMPOUND_FINGERPRINT, bits, [[0, graph.num_atoms]])


def atom_features(graph: MolecularGraph) -> SegmentMatrix:
    """One row per atom: element, degree and H one-hots, aromatic bit, charge."""
    n = graph.num_atoms
    rows = np.zeros((n, ATOM_FEATURE_DIM), dtype=np.float64)
    deg_off = len(ELEMENTS)
    h_off = deg_off + MAX_DEGREE + 1
    arom = h_off + MAX_HYDROGENS + 1
    for i, atom in enumerate(graph.atoms):
        rows[i, ELEMENTS.index(atom.element)] = 1.0
        rows[i, deg_off + min(atom.degree, MAX_DEGREE)] = 1.0
        rows[i, h_off + min(atom.implicit_h, MAX_HYDROGENS)] = 1.0
        rows[i, arom] = float(atom.aromatic)
        rows[i, arom + 1] = float(atom.formal_charge)
    segment_map = [[i, i + 1] for i in range(n)]
    edges = [[b.a, b.b] for b in graph.bonds]
    return SegmentMatrix(ViewKind.COMPOUND_GRAPH, rows, segment_map,
                         edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2))


# --- target views -----------------------------------------------------------

def encode_sequence(seq: str, min_length: int = 1) -> np.ndarray:
    seq = seq.strip().upper()
    bad = sorted({ch for ch in seq if ch not in RESIDUE_INDEX})
    if bad:
        raise InvalidResidue(f"residues outside the 20-letter alphabet: {''.join(bad)}")
    if len(seq) < min_length:
        raise SequenceTooShort(f"sequence of length {len(seq)} is shorter than {min_length}")
    return np.fromiter((RESIDUE_INDEX[ch] for ch in seq), dtype=np.int64, count=len(seq))


def kmer_slots(k: int) -> list[str]:
    """Lexicographic slot order of all k-mers over the residue alphabet."""
    return ["".join(p) for p in product(AMINO_ACIDS, repeat=k)]


def psc(seq: str) -> SegmentMatrix:
    """Protein sequence composition: 1-, 2- and 3-mer frequencies (8420 dims).

    Each k-mer block is normalized by its own number of k-mers.
    """
    codes = encode_sequence(seq, min_length=3)
    blocks = []
    for k in (1, 2, 3):
        m = len(codes) - k + 1
        index = np.zeros(m, dtype=np.int64)
        for offset in range(k):
            index = index * 20 + codes[offset:offset + m]
        counts = np.bincount(index, minlength=20 ** k).astype(np.float64)
        blocks.append(counts / m)
    rows = np.concatenate(blocks)[None, :]
    return SegmentMatrix(ViewKind.TARGET_COMPOSITION, rows, [[0, len(codes)]])


def window_starts(length: int, n: int, stride: int) -> list[int]:
    if stride <= 0 or n <= 0:
        raise ValueError("window length and stride must be positive")
    starts = list(range(0, length - n + 1, stride))
    if starts[-1] != length - n:
        starts.append(length - n)
    return starts


def ngram_segments(seq: str, n: int = 3, stride: int = 3) -> SegmentMatrix:
    """Integer-coded residue windows; a trailing partial window is right-aligned."""
    codes = encode_sequence(seq, min_length=n)
    starts = window_starts(len(codes), n, stride)
    rows = np.stack([codes[s:s + n] for s in starts])
    return SegmentMatrix(ViewKind.TARGET_NGRAM, rows, [[s, s + n] for s in starts])


@dataclass(frozen=True)
class FeaturizerConfig:
    radius: int = 4
    nbits: int = 2048
    ngram_n: int = 3
    ngram_stride: int = 3

    def view_dims(self) -> dict[ViewKind, int]:
        return {
            ViewKind.COMPOUND_FINGERPRINT: self.nbits,
            ViewKind.COMPOUND_GRAPH: ATOM_FEATURE_DIM,
            ViewKind.TARGET_COMPOSITION: PSC_DIM,
            ViewKind.TARGET_NGRAM: self.ngram_n,
        }


def featurize_compound(smiles: str, config: FeaturizerConfig = FeaturizerConfig(),
                       views=None) -> dict[ViewKind, SegmentMatrix]:
    """Both compound views for one SMILES string (parse errors propagate)."""
    from jova.smiles import parse_smiles

    wanted = set(views) if views is not None else {
        ViewKind.COMPOUND_FINGERPRINT, ViewKind.COMPOUND_GRAPH}
    graph = parse_smiles(smiles)
    out = {}
    if ViewKind.COMPOUND_FINGERPRINT in wanted:
        out[ViewKind.COMPOUND_FINGERPRINT] = ecfp(graph, config.radius, config.nbits)
    if ViewKind.COMPOUND_GRAPH in wanted:
        out[ViewKind.COMPOUND_GRAPH] = atom_features(graph)
    return out


def featurize_target(sequence: str, config: FeaturizerConfig = FeaturizerConfig(),
                     views=None) -> dict[ViewKind, SegmentMatrix]:
    wanted = set(views) if views is not None else {
        ViewKind.TARGET_COMPOSITION, ViewKind.TARGET_NGRAM}
    out = {}
    if ViewKind.TARGET_COMPOSITION in wanted:
        out[ViewKind.TARGET_COMPOSITION] = psc(sequence)
    if ViewKind.TARGET_NGRAM in wanted:
        out[ViewKind.TARGET_NGRAM] = ngram_segments(sequence, config.ngram_n,
                                                    config.ngram_stride)
    return out
