"""Run configuration: flat ``key=value`` files with command-line overrides.

Precedence is flag > file > default.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from jova.data import SCHEMES, NUM_FOLDS
from jova.featurizers import FeaturizerConfig
from jova.model import ModelConfig
from jova.training import TrainSettings


class ConfigError(ValueError):
    """Bad configuration; reported as a usage error."""


@dataclass
class RunConfig:
    data: str = ""
    scheme: str = "warm"
    seeds: tuple[int, ...] = (0,)
    folds: tuple[int, ...] = tuple(range(NUM_FOLDS))
    threshold: int = 0
    transform: str = "none"
    out_dir: str = "runs"
    valid_fraction: float = 0.125
    # model
    variant: str = "jova1"
    latent_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    num_attention_blocks: int = 1
    head_hidden: tuple[int, ...] = (128, 64)
    graph_depth: int = 0  # 0 = variant default (2 for jova1, 3 for jova2)
    graph_hidden: int = 64
    ngram_embed_dim: int = 8
    rnn_hidden: int = 64
    # featurizers
    radius: int = 4
    nbits: int = 2048
    ngram_n: int = 3
    ngram_stride: int = 3
    # optimizer
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_steps: int = 2000
    eval_every: int = 10
    patience: int = 50

    def validate(self) -> None:
        if not self.data:
            raise ConfigError("config needs 'data'")
        if not Path(self.data).exists():
            raise FileNotFoundError(f"data file {self.data!r} does not exist")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {', '.join(SCHEMES)}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.folds or any(f < 0 or f >= NUM_FOLDS for f in self.folds):
            raise ConfigError(f"folds must be within 0..{NUM_FOLDS - 1}")
        if self.variant not in ("jova1", "jova2"):
            raise ConfigError("variant must be jova1 or jova2")
        if self.transform not in ("none", "pkd"):
            raise ConfigError("transform must be none or pkd")
        if self.threshold < 0:
            raise ConfigError("threshold must be >= 0")

    def featurizer(self) -> FeaturizerConfig:
        return FeaturizerConfig(self.radius, self.nbits, self.ngram_n, self.ngram_stride)

    def model_config(self, seed: int) -> ModelConfig:
        kw = dict(latent_dim=self.latent_dim, num_heads=self.num_heads, ffn_dim=self.ffn_dim,
                  num_attention_blocks=self.num_attention_blocks, head_hidden=self.head_hidden,
                  graph_hidden=self.graph_hidden, ngram_embed_dim=self.ngram_embed_dim,
                  rnn_hidden=self.rnn_hidden, seed=seed)
        if self.graph_depth:
            kw["graph_depth"] = self.graph_depth
        build = ModelConfig.jova1 if self.variant == "jova1" else ModelConfig.jova2
        try:
            return build(self.featurizer(), **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_settings(self, seed: int) -> TrainSettings:
        return TrainSettings(self.lr, self.beta1, self.beta2, self.eps, self.batch_size,
                             self.max_steps, self.eval_every, self.patience, seed)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(name: str, raw: str):
    default = getattr(RunConfig(), name)
    raw = raw.strip()
    try:
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r}") from None
    return raw


def parse_pairs(lines, source: str = "config") -> dict:
    values = {}
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{source} line {n}: expected key=value, got {line!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{source} line {n}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def load_run_config(path=None, overrides=None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_pairs(text.splitlines(), str(path)))
    values.update(overrides or {})
    config = RunConfig(**values)
    config.validate()
    return config
