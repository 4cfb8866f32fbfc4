"""Shared fixtures: tiny model configurations and random view samples."""
import numpy as np
import pytest

from jova.featurizers import SegmentMatrix, ViewKind
from jova.model import ModelConfig, ViewSpec

FP_DIM, GRAPH_DIM, PSC_DIM_SMALL, NGRAM_N = 16, 6, 12, 3

TINY_DIMS = {
    ViewKind.COMPOUND_FINGERPRINT: FP_DIM,
    ViewKind.COMPOUND_GRAPH: GRAPH_DIM,
    ViewKind.TARGET_NGRAM: NGRAM_N,
    ViewKind.TARGET_COMPOSITION: PSC_DIM_SMALL,
}
ALL_KINDS = list(TINY_DIMS)


def tiny_config(kinds=None, **kw) -> ModelConfig:
    """l=8, two heads, d_seg=16 over small synthetic view widths."""
    kinds = ALL_KINDS if kinds is None else kinds
    defaults = dict(latent_dim=8, num_heads=2, ffn_dim=16, head_hidden=(8, 8), graph_hidden=8,
                    rnn_hidden=8, ngram_embed_dim=4, seed=3)
    defaults.update(kw)
    return ModelConfig(views=[ViewSpec(k, TINY_DIMS[k]) for k in kinds], **defaults)


def random_sample(rng, n_atoms=4, n_windows=3, kinds=None) -> dict:
    """A dict of random SegmentMatrix views with the requested segment counts."""
    kinds = ALL_KINDS if kinds is None else kinds
    views = {}
    for kind in kinds:
        if kind is ViewKind.COMPOUND_FINGERPRINT:
            rows = (rng.random((1, FP_DIM)) < 0.4).astype(float)
            views[kind] = SegmentMatrix(kind, rows, [[0, n_atoms]])
        elif kind is ViewKind.COMPOUND_GRAPH:
            edges = [[i, i + 1] for i in range(n_atoms - 1)]
            views[kind] = SegmentMatrix(kind, rng.normal(size=(n_atoms, GRAPH_DIM)),
                                        [[i, i + 1] for i in range(n_atoms)],
                                        edges=np.array(edges, dtype=np.int64).reshape(-1, 2))
        elif kind is ViewKind.TARGET_COMPOSITION:
            views[kind] = SegmentMatrix(kind, rng.random((1, PSC_DIM_SMALL)), [[0, 3 * n_windows]])
        else:
            views[kind] = SegmentMatrix(kind, rng.integers(0, 20, size=(n_windows, NGRAM_N)),
                                        [[3 * i, 3 * i + 3] for i in range(n_windows)])
    return views


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance summary ------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
