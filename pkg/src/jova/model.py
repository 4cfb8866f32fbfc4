"""Joint view self-attention model.

Every view of a compound-target pair is projected to the latent width, the
projected segments of all views are concatenated into one joint matrix,
updated by multihead self-attention blocks, split back per view, sum-pooled
and concatenated into the combined input vector for a small regression MLP.

Tensors are batch-first, ``(samples, segments, features)``; each sample's
real segments are packed at the front and the tail is zero padding.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from jova.errors import ShapeMismatch
from jova.featurizers import FeaturizerConfig, SegmentMatrix, ViewKind
from jova.tensor import (
    Parameter,
    Tensor,
    add,
    concat,
    embedding_lookup,
    gather_rows,
    layer_norm,
    masked_softmax,
    matmul,
    mul,
    recurrent_step,
    relu,
    reshape,
    stack,
    transpose,
)

VIEW_ORDER = (
    ViewKind.COMPOUND_FINGERPRINT,
    ViewKind.COMPOUND_GRAPH,
    ViewKind.TARGET_NGRAM,
    ViewKind.TARGET_COMPOSITION,
)


@dataclass
class ViewSpec:
    kind: ViewKind
    input_dim: int


@dataclass
class ModelConfig:
    views: list[ViewSpec]
    latent_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    num_attention_blocks: int = 1
    head_hidden: tuple[int, ...] = (128, 64)
    graph_depth: int = 2
    graph_hidden: int = 64
    ngram_embed_dim: int = 8
    rnn_hidden: int = 64
    seed: int = 0
    # affine map from the head's raw output to dataset units
    target_mean: float = 0.0
    target_std: float = 1.0

    def __post_init__(self):
        self.views = [v if isinstance(v, ViewSpec) else ViewSpec(ViewKind(v[0]), int(v[1]))
                      for v in self.views]
        self.head_hidden = tuple(int(h) for h in self.head_hidden)
        self.validate()

    @property
    def head_dim(self) -> int:
        return self.latent_dim // self.num_heads

    @property
    def kinds(self) -> list[ViewKind]:
        return [v.kind for v in self.views]

    def validate(self) -> None:
        kinds = self.kinds
        if not kinds:
            raise ValueError("at least one view is required")
        if len(set(kinds)) != len(kinds):
            raise ValueError("each view kind may appear only once")
        if not any(k.entity == "compound" for k in kinds) or not any(
                k.entity == "target" for k in kinds):
            raise ValueError("need at least one compound view and one target view")
        if self.latent_dim % self.num_heads:
            raise ValueError("latent_dim must be divisible by num_heads")
        if min(self.latent_dim, self.num_heads, self.ffn_dim, self.num_attention_blocks) < 1:
            raise ValueError("dimensions and block count must be positive")
        if self.target_std <= 0:
            raise ValueError("target_std must be positive")

    @classmethod
    def jova1(cls, featurizer: FeaturizerConfig = FeaturizerConfig(), **kw) -> "ModelConfig":
        """Fingerprint, molecular graph, n-gram recurrence and composition views."""
        dims = featurizer.view_dims()
        return cls(views=[ViewSpec(k, dims[k]) for k in VIEW_ORDER], **kw)

    @classmethod
    def jova2(cls, featurizer: FeaturizerConfig = FeaturizerConfig(), **kw) -> "ModelConfig":
        """Fingerprint, deeper graph encoder and composition; no n-gram view."""
        dims = featurizer.view_dims()
        kw.setdefault("graph_depth", 3)
        kinds = [k for k in VIEW_ORDER if k is not ViewKind.TARGET_NGRAM]
        return cls(views=[ViewSpec(k, dims[k]) for k in kinds], **kw)

    def to_json(self) -> str:
        d = asdict(self)
        d["views"] = [[v.kind.value, v.input_dim] for v in self.views]
        d["head_hidden"] = list(self.head_hidden)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


# --- batching -----------------------------------------------------------------

@dataclass
class Batch:
    """Padded per-view inputs for N samples.

    ``arrays[kind]`` holds ``x`` (N, M, d) plus ``valid`` (N, M); the graph
    view adds ``adj`` (N, M, M) and the n-gram view stores integer codes.
    """

    kinds: list[ViewKind]
    arrays: dict
    counts: np.ndarray  # (N, J) real segments per view
    segment_maps: list[dict] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.counts.shape[0]


def collate(samples: list[dict], kinds) -> Batch:
    """Zero-pad each view across ``samples`` (dicts of ViewKind -> SegmentMatrix)."""
    kinds = list(kinds)
    if not samples:
        raise ValueError("cannot collate an empty batch")
    n = len(samples)
    arrays = {}
    counts = np.zeros((n, len(kinds)), dtype=np.int64)
    for j, kind in enumerate(kinds):
        mats: list[SegmentMatrix] = []
        for s in samples:
            if kind not in s:
                raise ShapeMismatch(f"sample lacks the {kind.value} view")
            mats.append(s[kind])
        m = max(mat.num_segments for mat in mats)
        d = mats[0].dim
        if any(mat.dim != d for mat in mats):
            raise ShapeMismatch(f"{kind.value}: inconsistent feature widths")
        dtype = np.int64 if kind is ViewKind.TARGET_NGRAM else np.float64
        x = np.zeros((n, m, d), dtype=dtype)
        valid = np.zeros((n, m), dtype=bool)
        entry = {"x": x, "valid": valid}
        if kind is ViewKind.COMPOUND_GRAPH:
            entry["adj"] = np.zeros((n, m, m), dtype=np.float64)
        for i, mat in enumerate(mats):
            r = mat.num_segments
            x[i, :r] = mat.rows
            valid[i, :r] = True
            counts[i, j] = r
            if kind is ViewKind.COMPOUND_GRAPH and mat.edges is not None and len(mat.edges):
                a, b = mat.edges[:, 0], mat.edges[:, 1]
                entry["adj"][i, a, b] = 1.0
                entry["adj"][i, b, a] = 1.0
        arrays[kind] = entry
    maps = [{kind: s[kind].segment_map for kind in kinds} for s in samples]
    return Batch(kinds, arrays, counts, maps)


# --- intermediate results -------------------------------------------------------

@dataclass
class JointRepresentation:
    segments: Tensor                 # (N, K, l), padded rows are zero
    view_spans: list[list[tuple[int, int]]]  # per sample, per view [start, end)
    pad_mask: np.ndarray             # (N, K) True on zero-padded rows
    kinds: list[ViewKind]

    @property
    def num_segments(self) -> np.ndarray:
        """K for every sample (real rows only)."""
        return (~self.pad_mask).sum(axis=1)

    @property
    def seq_first(self) -> np.ndarray:
        """Segments in (segments, samples, features) layout."""
        return np.transpose(self.segments.data, (1, 0, 2))


@dataclass
class PooledViews:
    per_view: Tensor  # (N, J, l)
    civ: Tensor       # (N, J * l)


@dataclass
class ForwardResult:
    joint: JointRepresentation
    updated: Tensor                       # X-hat, (N, K, l)
    attention: list[list[np.ndarray]]     # per block, per head (N, K, K)
    pooled: PooledViews
    prediction: Tensor                    # (N,)


# --- model ---------------------------------------------------------------------

class JovaModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: dict[str, Parameter] = {}
        self._rng = np.random.default_rng(config.seed)
        self._build()

    # parameters
    def _affine(self, name: str, fan_in: int, fan_out: int, bias: bool = True) -> None:
        bound = 1.0 / math.sqrt(fan_in)
        self.params[f"{name}.weight"] = Parameter(
            self._rng.uniform(-bound, bound, size=(fan_in, fan_out)), f"{name}.weight")
        if bias:
            self.params[f"{name}.bias"] = Parameter(np.zeros(fan_out), f"{name}.bias")

    def _build(self) -> None:
        c = self.config
        l = c.latent_dim
        for spec in c.views:
            key = f"view.{spec.kind.value}"
            if spec.kind is ViewKind.COMPOUND_GRAPH:
                width = spec.input_dim
                for t in range(c.graph_depth):
                    self._affine(f"{key}.conv{t}", width, c.graph_hidden)
                    width = c.graph_hidden
                self._affine(f"{key}.project", width, l)
            elif spec.kind is ViewKind.TARGET_NGRAM:
                e, h = c.ngram_embed_dim, c.rnn_hidden
                self.params[f"{key}.embedding"] = Parameter(
                    self._rng.uniform(-1.0, 1.0, size=(20, e)), f"{key}.embedding")
                for gate in ("z", "r", "n"):
                    self._affine(f"{key}.input_{gate}", spec.input_dim * e, h)
                    self._affine(f"{key}.hidden_{gate}", h, h, bias=False)
                self._affine(f"{key}.project", h, l)
            else:
                self._affine(f"{key}.project", spec.input_dim, l)
        dk = c.head_dim
        for b in range(c.num_attention_blocks):
            key = f"block{b}"
            for i in range(c.num_heads):
                for role in ("query", "key", "value"):
                    self._affine(f"{key}.head{i}.{role}", l, dk, bias=False)
            self._affine(f"{key}.output", c.num_heads * dk, l, bias=False)
            self.params[f"{key}.norm1.gamma"] = Parameter(np.ones(l), f"{key}.norm1.gamma")
            self.params[f"{key}.norm1.beta"] = Parameter(np.zeros(l), f"{key}.norm1.beta")
            self._affine(f"{key}.ffn1", l, c.ffn_dim)
            self._affine(f"{key}.ffn2", c.ffn_dim, l)
            self.params[f"{key}.norm2.gamma"] = Parameter(np.ones(l), f"{key}.norm2.gamma")
            self.params[f"{key}.norm2.beta"] = Parameter(np.zeros(l), f"{key}.norm2.beta")
        width = len(c.views) * l
        for i, hidden in enumerate(c.head_hidden):
            self._affine(f"head.hidden{i}", width, hidden)
            width = hidden
        self._affine("head.out", width, 1)

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = sorted(set(self.params) - set(state))
            extra = sorted(set(state) - set(self.params))
            raise ShapeMismatch(f"state mismatch; missing={missing[:3]} extra={extra[:3]}")
        for name, p in self.params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeMismatch(f"{name}: {value.shape} vs {p.shape}")
            p.data = value.astype(p.dtype, copy=True)
            p.zero_grad()

    def _p(self, name: str) -> Parameter:
        return self.params[name]

    def _linear(self, x, name: str, bias: bool = True):
        out = matmul(x, self._p(f"{name}.weight"))
        return add(out, self._p(f"{name}.bias")) if bias else out

    # per-view encoders
    def _encode_view(self, kind: ViewKind, entry: dict) -> Tensor:
        c = self.config
        dtype = next(iter(self.params.values())).dtype
        key = f"view.{kind.value}"
        valid = entry["valid"][..., None].astype(dtype)
        if kind is ViewKind.COMPOUND_GRAPH:
            h = Tensor(entry["x"], dtype=dtype)
            adj = Tensor(entry["adj"], dtype=dtype)
            for t in range(c.graph_depth):
                msg = add(h, matmul(adj, h))
                h = mul(relu(self._linear(msg, f"{key}.conv{t}")), valid)
            return mul(self._linear(h, f"{key}.project"), valid)
        if kind is ViewKind.TARGET_NGRAM:
            codes = entry["x"]
            n_samples, n_windows, width = codes.shape
            emb = embedding_lookup(self._p(f"{key}.embedding"), codes)
            emb = reshape(emb, (n_samples, n_windows, width * c.ngram_embed_dim))
            gates = [self._linear(emb, f"{key}.input_{g}") for g in ("z", "r", "n")]
            h = Tensor(np.zeros((n_samples, c.rnn_hidden)), dtype=dtype)
            states = []
            for t in range(n_windows):
                h = recurrent_step([g[:, t] for g in gates], h,
                                   self._p(f"{key}.hidden_z.weight"),
                                   self._p(f"{key}.hidden_r.weight"),
                                   self._p(f"{key}.hidden_n.weight"))
                states.append(h)
            hs = stack(states, axis=1)
            return mul(self._linear(hs, f"{key}.project"), valid)
        x = Tensor(entry["x"], dtype=dtype)
        return mul(self._linear(x, f"{key}.project"), valid)

    def project_views(self, batch: Batch) -> JointRepresentation:
        """Latent projection of every view and packing into the joint matrix."""
        kinds = self.config.kinds
        if batch.kinds != kinds:
            raise ShapeMismatch(f"batch views {batch.kinds} differ from model views {kinds}")
        for spec in self.config.views:
            d = batch.arrays[spec.kind]["x"].shape[-1]
            if d != spec.input_dim:
                raise ShapeMismatch(f"{spec.kind.value}: input dim {d}, expected {spec.input_dim}")
        projected = [self._encode_view(kind, batch.arrays[kind]) for kind in kinds]
        widths = [p.shape[1] for p in projected]
        offsets = np.concatenate([[0], np.cumsum(widths)[:-1]])
        n = batch.size
        totals = batch.counts.sum(axis=1)
        k_max = int(totals.max())
        index = np.zeros((n, k_max), dtype=np.int64)
        spans = []
        for s in range(n):
            pos = 0
            sample_spans = []
            for j in range(len(kinds)):
                r = int(batch.counts[s, j])
                index[s, pos:pos + r] = offsets[j] + np.arange(r)
                sample_spans.append((pos, pos + r))
                pos += r
            spans.append(sample_spans)
        valid = np.arange(k_max)[None, :] < totals[:, None]
        joined = concat(projected, axis=1) if len(projected) > 1 else projected[0]
        segments = gather_rows(joined, index, valid)
        return JointRepresentation(segments, spans, ~valid, list(kinds))

    def attention_block(self, joint: JointRepresentation, block: int = 0,
                        segments: Tensor | None = None):
        """One multihead self-attention + segment-wise transform block.

        Returns the updated segments and the per-head attention weights.
        """
        c = self.config
        key = f"block{block}"
        x = joint.segments if segments is None else segments
        dtype = x.dtype
        real = ~joint.pad_mask
        key_mask = real[:, None, :]
        scale = 1.0 / math.sqrt(c.head_dim)
        heads, weights = [], []
        for i in range(c.num_heads):
            q = self._linear(x, f"{key}.head{i}.query", bias=False)
            k = self._linear(x, f"{key}.head{i}.key", bias=False)
            v = self._linear(x, f"{key}.head{i}.value", bias=False)
            scores = mul(matmul(q, transpose(k, (0, 2, 1))), scale)
            attn = masked_softmax(scores, key_mask)
            weights.append(attn.data)
            heads.append(matmul(attn, v))
        multi = concat(heads, axis=-1) if len(heads) > 1 else heads[0]
        multi = self._linear(multi, f"{key}.output", bias=False)
        a = layer_norm(add(x, multi), self._p(f"{key}.norm1.gamma"), self._p(f"{key}.norm1.beta"))
        ff = self._linear(relu(self._linear(a, f"{key}.ffn1")), f"{key}.ffn2")
        out = layer_norm(add(a, ff), self._p(f"{key}.norm2.gamma"), self._p(f"{key}.norm2.beta"))
        out = mul(out, real[..., None].astype(dtype))
        return out, weights

    def split_and_pool(self, updated: Tensor, joint: JointRepresentation) -> PooledViews:
        """Sum each view's real segments; concatenate the sums in view order."""
        n, k, l = updated.shape
        j = len(joint.kinds)
        selector = np.zeros((n, j, k), dtype=updated.dtype)
        for s, spans in enumerate(joint.view_spans):
            for v, (start, end) in enumerate(spans):
                selector[s, v, start:end] = 1.0
        per_view = matmul(Tensor(selector, dtype=updated.dtype), updated)
        return PooledViews(per_view, reshape(per_view, (n, j * l)))

    def predict_civ(self, civ: Tensor) -> Tensor:
        c = self.config
        expected = len(c.views) * c.latent_dim
        if civ.ndim != 2 or civ.shape[1] != expected:
            raise ShapeMismatch(f"CIV has shape {civ.shape}, expected (N, {expected})")
        h = civ
        for i in range(len(c.head_hidden)):
            h = relu(self._linear(h, f"head.hidden{i}"))
        out = self._linear(h, "head.out")
        out = reshape(out, (civ.shape[0],))
        return add(mul(out, c.target_std), c.target_mean)

    def forward(self, batch: Batch) -> ForwardResult:
        joint = self.project_views(batch)
        x = joint.segments
        attention = []
        for b in range(self.config.num_attention_blocks):
            x, w = self.attention_block(joint, b, segments=x)
            attention.append(w)
        pooled = self.split_and_pool(x, joint)
        return ForwardResult(joint, x, attention, pooled, self.predict_civ(pooled.civ))

    def __call__(self, batch: Batch) -> Tensor:
        return self.forward(batch).prediction


# --- interpretability ranking -----------------------------------------------------

@dataclass(frozen=True)
class RankedSegment:
    view: ViewKind
    index: int              # row index within the view
    span: tuple[int, int]   # atom or residue range
    norm: float
    rank: int

    @property
    def is_global(self) -> bool:
        return self.view.is_vector


def segment_norms(rows: np.ndarray, norm: str = "l2") -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if norm == "l2":
        return np.sqrt((rows * rows).sum(axis=-1))
    if norm == "l1":
        return np.abs(rows).sum(axis=-1)
    raise ValueError(f"unknown norm {norm!r}")


def rank_segments(norms, k: int) -> list[int]:
    """Indices of the top-k norms, descending; ties go to the lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    norms = np.asarray(norms, dtype=np.float64)
    order = sorted(range(len(norms)), key=lambda i: (-norms[i], i))
    return order[:k]


def explain_segments(updated: np.ndarray, view_spans, segment_maps, kinds, k: int,
                     norm: str = "l2") -> dict[str, list[RankedSegment]]:
    """Rank one sample's updated segments by norm, per entity.

    ``updated`` is the (K, l) X-hat of a single sample, ``view_spans`` its
    per-view row ranges and ``segment_maps`` the per-view provenance arrays.
    Compound views are ranked together, as are target views.
    """
    updated = np.asarray(updated)
    out = {}
    for entity in ("compound", "target"):
        rows = []
        for kind, (start, end) in zip(kinds, view_spans):
            if kind.entity != entity:
                continue
            maps = segment_maps[kind]
            for i in range(end - start):
                rows.append((kind, i, tuple(int(v) for v in maps[i]), updated[start + i]))
        if not rows:
            out[entity] = []
            continue
        norms = segment_norms(np.stack([r[3] for r in rows]), norm)
        top = rank_segments(norms, k)
        out[entity] = [RankedSegment(rows[i][0], rows[i][1], rows[i][2], float(norms[i]), r + 1)
                       for r, i in enumerate(top)]
    return out
