"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected and printed in the pytest terminal summary; running
this file directly (``python tests/test_acceptance.py``) prints them too.
"""
import random
import time
from collections import Counter

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, ALL_KINDS, random_sample, tiny_config
from jova.cli import main
from jova.data import (
    InteractionRecord,
    featurize_records,
    load_feature_cache,
    make_folds,
    save_feature_cache,
    write_dataset,
    write_split_manifest,
)
from jova.errors import InfeasibleSplit, InfeasibleWarmSplit
from jova.featurizers import FeaturizerConfig, ViewKind, ecfp
from jova.metrics import concordance_index, rmse
from jova.model import JovaModel, ModelConfig, collate, explain_segments, rank_segments
from jova.smiles import parse_smiles, write_smiles
from jova.synthetic import KINASE_LIGANDS, make_synthetic_dataset
from jova.tensor import (
    Parameter,
    Tensor,
    check_gradients,
    default_dtype,
    load_checkpoint,
    mse_loss,
    mul,
    save_checkpoint,
    sum_,
)
from jova.training import (
    TrainSettings,
    load_model,
    predict_samples,
    save_model,
    standardize_targets,
    train_model,
)


def record(number, name, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


# --- 1 --------------------------------------------------------------------------

GRAD_TOL = 1e-4


def _max_error(results):
    return max(r.max_rel_error for r in results)


def test_01_gradient_oracle():
    """Per-layer and end-to-end central differences, float64, h=1e-5."""
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    errors = {}
    with default_dtype(np.float64):
        model = JovaModel(tiny_config(seed=5))
        # a well-scaled random point: at the tiny init some gradients are
        # ~1e-8, where finite differences only measure roundoff
        for p in model.parameters():
            p.data = rng.normal(scale=0.5, size=p.shape)
        samples = [random_sample(rng, 4, 3), random_sample(rng, 5, 2), random_sample(rng, 3, 4)]
        batch = collate(samples, ALL_KINDS)
        assert int(batch.counts.sum(axis=1).max()) <= 10
        assert model.config.ffn_dim == 16 and len(model.config.views) == 4
        y = rng.normal(size=3)

        def params(prefix):
            return [p for n, p in model.params.items() if n.startswith(prefix)]

        for kind in ALL_KINDS:
            entry = batch.arrays[kind]
            out_shape = model._encode_view(kind, entry).shape
            r = rng.normal(size=out_shape)
            errors[f"encoder {kind.value}"] = _max_error(check_gradients(
                lambda: sum_(mul(model._encode_view(kind, entry), r)), params(f"view.{kind.value}.")))

        joint = model.project_views(batch)
        x_in = Parameter(joint.segments.data.copy(), "joint")
        r = rng.normal(size=x_in.shape)
        errors["attention block"] = _max_error(check_gradients(
            lambda: sum_(mul(model.attention_block(joint, 0, segments=x_in)[0], r)),
            [x_in] + params("block0.")))

        upd = Parameter(rng.normal(size=x_in.shape), "updated")
        r = rng.normal(size=(3, 4 * 8))
        errors["split and pool"] = _max_error(check_gradients(
            lambda: sum_(mul(model.split_and_pool(upd, joint).civ, r)), [upd]))

        civ = Parameter(rng.normal(size=(3, 32)), "civ")
        errors["prediction head"] = _max_error(check_gradients(
            lambda: mse_loss(model.predict_civ(civ), y), [civ] + params("head.")))

        errors["end to end"] = _max_error(check_gradients(
            lambda: mse_loss(model(batch), y), model.parameters()))
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    passed = all(e < GRAD_TOL for e in errors.values()) and elapsed < 60
    record(1, "gradient oracle", passed,
           f"max rel err {errors[worst]:.2e} ({worst}) over {len(errors)} checks, {elapsed:.1f}s")
    assert passed, errors


# --- 2 --------------------------------------------------------------------------

def _attention_deviations(dtype):
    rng = np.random.default_rng(21)
    with default_dtype(dtype):
        model = JovaModel(ModelConfig(views=tiny_config().views, seed=2))  # l=64, 4 heads
        worst_sum = worst_perm = 0.0
        masked_zero = True
        for trial in range(20):
            sizes = [(int(rng.integers(1, 12)), int(rng.integers(1, 8))) for _ in range(3)]
            batch = collate([random_sample(rng, a, w) for a, w in sizes], ALL_KINDS)
            joint = model.project_views(batch)
            _, weights = model.attention_block(joint)
            for w in weights:
                for s in range(batch.size):
                    real = ~joint.pad_mask[s]
                    worst_sum = max(worst_sum, float(np.abs(w[s][real].sum(axis=-1) - 1).max()))
                    masked_zero &= bool(np.all(w[s][:, ~real] == 0.0))
            # permute rows and mask together, sample by sample
            for s in range(batch.size):
                perm = rng.permutation(joint.segments.shape[1])
                x = joint.segments.data[s:s + 1]
                single = type(joint)(Tensor(x), [joint.view_spans[s]],
                                     joint.pad_mask[s:s + 1], joint.kinds)
                permuted = type(joint)(Tensor(x[:, perm]), [joint.view_spans[s]],
                                       joint.pad_mask[s:s + 1, perm], joint.kinds)
                a, _ = model.attention_block(single)
                b, _ = model.attention_block(permuted)
                worst_perm = max(worst_perm, float(np.abs(b.data[0] - a.data[0][perm]).max()))
    return worst_sum, masked_zero, worst_perm


def test_02_attention_invariants():
    worst_sum, masked_zero, worst_perm = _attention_deviations(np.float64)
    _, _, perm32 = _attention_deviations(np.float32)
    passed = worst_sum <= 1e-6 and masked_zero and worst_perm <= 1e-6
    record(2, "attention invariants", passed,
           f"row-sum dev {worst_sum:.1e}, masked keys zero={masked_zero}, "
           f"permutation dev {worst_perm:.1e} (float32 run: {perm32:.1e})")
    assert passed


# --- 3 --------------------------------------------------------------------------

def test_03_shape_suite_and_padding():
    rng = np.random.default_rng(31)
    compound = [ViewKind.COMPOUND_FINGERPRINT, ViewKind.COMPOUND_GRAPH]
    target = [ViewKind.TARGET_NGRAM, ViewKind.TARGET_COMPOSITION]
    shape_ok = True
    worst_pad = 0.0
    for trial in range(100):
        kinds = [k for k in compound if rng.random() < 0.6] or [compound[trial % 2]]
        kinds += [k for k in target if rng.random() < 0.6] or [target[trial % 2]]
        l, heads = [(8, 2), (16, 4), (12, 3)][trial % 3]
        model = JovaModel(tiny_config(kinds=kinds, latent_dim=l, num_heads=heads, seed=trial))
        n = int(rng.integers(1, 5))
        samples = [random_sample(rng, int(rng.integers(1, 10)), int(rng.integers(1, 7)), kinds)
                   for _ in range(n)]
        batch = collate(samples, kinds)
        result = model.forward(batch)
        expected_k = [sum(s[k].num_segments for k in kinds) for s in samples]
        shape_ok &= result.joint.num_segments.tolist() == expected_k
        shape_ok &= result.pooled.civ.shape == (n, len(kinds) * l)
        alone = np.array([model(collate([s], kinds)).data[0] for s in samples])
        worst_pad = max(worst_pad, float(np.abs(alone - result.prediction.data).max()))
    passed = shape_ok and worst_pad < 1e-5
    record(3, "joint matrix and CIV shapes", passed,
           f"100 configurations, shapes exact={shape_ok}, padding dev {worst_pad:.1e}")
    assert passed


# --- 4 --------------------------------------------------------------------------

def _pooling_deviation(dtype):
    rng = np.random.default_rng(41)
    worst = 0.0
    with default_dtype(dtype):
        model = JovaModel(ModelConfig(views=tiny_config().views, seed=4))
        for trial in range(30):
            batch = collate([random_sample(rng, int(rng.integers(2, 15)), int(rng.integers(2, 9)))],
                            ALL_KINDS)
            result = model.forward(batch)
            x = result.updated.data.copy()
            y = x.copy()
            for start, end in result.joint.view_spans[0]:
                y[0, start:end] = x[0, start:end][rng.permutation(end - start)]
            a = model.split_and_pool(Tensor(x), result.joint).per_view.data
            b = model.split_and_pool(Tensor(y), result.joint).per_view.data
            worst = max(worst, float(np.abs(a - b).max()))
    return worst


def test_04_pooling_permutation():
    worst = _pooling_deviation(np.float64)
    worst32 = _pooling_deviation(np.float32)
    passed = worst <= 1e-6
    record(4, "pooling permutation invariance", passed,
           f"max deviation {worst:.1e} over 30 trials (float32 run: {worst32:.1e})")
    assert passed


# --- 5 --------------------------------------------------------------------------

def brute_force_ci(pred, truth):
    num = 0.0
    den = 0
    for i in range(len(truth)):
        for j in range(len(truth)):
            if truth[i] > truth[j]:
                den += 1
                num += 1.0 if pred[i] > pred[j] else 0.5 if pred[i] == pred[j] else 0.0
    return num / den


def _random_increasing(rng):
    family = rng.integers(0, 4)
    a, b = rng.uniform(0.5, 3.0), rng.uniform(-5, 5)
    if family == 0:
        return lambda x: a * x + b
    if family == 1:
        return lambda x: np.exp(x / (4 * a))
    if family == 2:
        return lambda x: a * x ** 3 + x
    return lambda x: np.arctan(x / a) + b


def test_05_concordance_oracle():
    rng = np.random.default_rng(51)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(2, 51))
        pred = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
        truth = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
        if len(set(truth)) < 2:
            truth[0] += 1.0
        mismatches += concordance_index(pred, truth) != brute_force_ci(pred, truth)
    pred = np.round(rng.normal(size=40), 2)
    truth = rng.normal(size=40)
    base = concordance_index(pred, truth)
    changed = 0
    for _ in range(20):
        moved = _random_increasing(rng)(pred)
        assert np.array_equal(np.argsort(moved, kind="stable"), np.argsort(pred, kind="stable"))
        changed += concordance_index(moved, truth) != base
    passed = mismatches == 0 and changed == 0
    record(5, "concordance index oracle", passed,
           f"{200 - mismatches}/200 exact matches, {20 - changed}/20 transforms invariant")
    assert passed


# --- 6 --------------------------------------------------------------------------

def _random_dataset(rng):
    nc, nt = int(rng.integers(5, 16)), int(rng.integers(5, 16))
    density = rng.uniform(0.25, 1.0)
    records = [InteractionRecord(f"c{c}", "C", f"t{t}", "ACD", float(rng.normal()))
               for c in range(nc) for t in range(nt) if rng.random() < density]
    return records


def _split_violations(records, split):
    n = len(records)
    bad = 0
    bad += sorted(i for f in split.folds for i in f.test) != list(range(n))
    for f in split.folds:
        bad += len(f.train) + len(f.valid) + len(f.test) != n
        bad += set(f.train) | set(f.valid) | set(f.test) != set(range(n))
        train_c = {records[i].compound_id for i in f.train}
        train_t = {records[i].target_id for i in f.train}
        held = [records[i] for i in f.test + f.valid]
        if split.scheme == "warm":
            bad += not all(r.compound_id in train_c and r.target_id in train_t for r in held)
        elif split.scheme == "cold_drug":
            bad += bool(train_c & {r.compound_id for r in held})
        else:
            bad += bool(train_t & {r.target_id for r in held})
    return bad


def test_06_split_properties(tmp_path):
    rng = np.random.default_rng(61)
    checked = violations = infeasible_ok = bytes_diff = 0
    for d in range(100):
        records = _random_dataset(rng)
        cc = Counter(r.compound_id for r in records)
        tc = Counter(r.target_id for r in records)
        for scheme in ("warm", "cold_drug", "cold_target"):
            for seed in (0, 1, 2):
                try:
                    split = make_folds(records, scheme, seed)
                except InfeasibleWarmSplit:
                    feasible = min(cc.values()) >= 2 and min(tc.values()) >= 2
                    violations += feasible
                    infeasible_ok += not feasible
                    continue
                except InfeasibleSplit:
                    ids = cc if scheme == "cold_drug" else tc
                    violations += len(ids) >= 5
                    infeasible_ok += len(ids) < 5
                    continue
                checked += 1
                violations += _split_violations(records, split)
                if d % 10 == 0:
                    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
                    write_split_manifest(a, split, len(records))
                    write_split_manifest(b, make_folds(records, scheme, seed), len(records))
                    bytes_diff += a.read_bytes() != b.read_bytes()
    passed = violations == 0 and bytes_diff == 0 and checked >= 600
    record(6, "split scheme properties", passed,
           f"{checked} splits checked, {infeasible_ok} correctly infeasible, "
           f"{violations} violations, manifest byte mismatches {bytes_diff}")
    assert passed


# --- 7 --------------------------------------------------------------------------

def test_07_fingerprint_invariance():
    fixtures = {"ethanol": "CCO", "benzene": "c1ccccc1",
                "anilinoquinazoline": KINASE_LIGANDS["anilinoquinazoline"]}
    assert parse_smiles(fixtures["anilinoquinazoline"]).num_atoms == 20
    rng = random.Random(71)
    differing = 0
    for smiles in fixtures.values():
        graph = parse_smiles(smiles)
        reference = ecfp(graph, radius=4, nbits=2048).rows
        for _ in range(50):
            spelled = write_smiles(graph, rng)
            differing += not np.array_equal(ecfp(parse_smiles(spelled), 4, 2048).rows, reference)
    radius0 = int(ecfp(parse_smiles("CCO"), radius=0).rows.sum())
    passed = differing == 0 and radius0 == 3
    record(7, "fingerprint invariance", passed,
           f"{150 - differing}/150 respellings bit-identical, CCO radius 0 sets {radius0} bits")
    assert passed


# --- 8 --------------------------------------------------------------------------

@pytest.mark.slow
def test_08_overfit():
    records = make_synthetic_dataset(8, 4, seed=1)
    assert len(records) == 32
    fc = FeaturizerConfig()
    store = featurize_records(records, fc)
    y = np.array([r.affinity for r in records])
    config = ModelConfig.jova1(fc, seed=0)
    assert (config.latent_dim, config.num_heads) == (64, 4)
    standardize_targets(config, y)
    model = JovaModel(config)
    samples = [store.sample(r, config.kinds) for r in records]
    start = time.perf_counter()
    result = train_model(model, samples, y, TrainSettings(max_steps=2000, batch_size=32))
    elapsed = time.perf_counter() - start
    train_rmse = rmse(predict_samples(model, samples), y)
    passed = result.steps <= 2000 and train_rmse < 0.05 and elapsed < 300
    record(8, "overfit smoke test", passed,
           f"train RMSE {train_rmse:.2e} after {result.steps} steps, {elapsed:.0f}s")
    assert passed


# --- 9 --------------------------------------------------------------------------

@pytest.mark.slow
def test_09_desk_scale_learning():
    records = make_synthetic_dataset(25, 20, seed=0)
    assert len(records) == 500
    fc = FeaturizerConfig()
    start = time.perf_counter()
    store = featurize_records(records, fc)
    y = np.array([r.affinity for r in records])
    split = make_folds(records, "warm", seed=0)
    beats, cis, lines = 0, [], []
    for f, fold in enumerate(split.folds):
        config = ModelConfig.jova1(fc, seed=f)
        standardize_targets(config, y[fold.train])
        model = JovaModel(config)

        def views(idx):
            return [store.sample(records[i], config.kinds) for i in idx]

        train_model(model, views(fold.train), y[fold.train],
                    TrainSettings(max_steps=400, patience=20, seed=f),
                    views(fold.valid), y[fold.valid])
        pred = predict_samples(model, views(fold.test))
        model_rmse = rmse(pred, y[fold.test])
        baseline = rmse(np.full(len(fold.test), y[fold.train].mean()), y[fold.test])
        beats += model_rmse < baseline
        cis.append(concordance_index(pred, y[fold.test]))
        lines.append(f"{model_rmse:.2f}/{baseline:.2f}")
    elapsed = time.perf_counter() - start
    passed = beats >= 4 and min(cis) > 0.6 and elapsed < 900
    record(9, "desk-scale learning signal", passed,
           f"beats mean in {beats}/5 folds (rmse/base {' '.join(lines)}), "
           f"CI min {min(cis):.3f} mean {np.mean(cis):.3f}, {elapsed:.0f}s")
    assert passed


# --- 10 -------------------------------------------------------------------------

def test_10_interpretability_determinism():
    checks = []
    checks.append(rank_segments([3.0, 1.0, 2.0], 2) == [0, 2])
    checks.append(rank_segments([2.0, 2.0, 2.0, 2.0], 2) == [0, 1])
    checks.append(rank_segments([1.0, 4.0], 10) == [1, 0])

    kinds = [ViewKind.COMPOUND_GRAPH, ViewKind.TARGET_NGRAM]
    maps = {ViewKind.COMPOUND_GRAPH: np.array([[0, 1], [1, 2], [2, 3]]),
            ViewKind.TARGET_NGRAM: np.array([[0, 3], [3, 6]])}
    updated = np.zeros((5, 4))
    updated[0:3, 1] = [1.0, 5.0, 3.0]
    updated[3:5, 2] = [7.0, 7.0]
    out = explain_segments(updated, [(0, 3), (3, 5)], maps, kinds, k=2)
    checks.append([s.span[0] for s in out["compound"]] == [1, 2])
    checks.append([s.span for s in out["target"]] == [(0, 3), (3, 6)])   # tie: lower index first

    rng = np.random.default_rng(101)
    for _ in range(20):
        x = rng.normal(size=(12, 6))
        x[rng.integers(0, 12)] = x[0]               # plant a tie
        c = float(rng.uniform(0.01, 100))
        spans = [(0, 7), (7, 12)]
        maps = {ViewKind.COMPOUND_GRAPH: np.array([[i, i + 1] for i in range(7)]),
                ViewKind.TARGET_NGRAM: np.array([[3 * i, 3 * i + 3] for i in range(5)])}
        a = explain_segments(x, spans, maps, kinds, k=4)
        b = explain_segments(x * c, spans, maps, kinds, k=4)
        checks.append(all([s.index for s in a[e]] == [s.index for s in b[e]] for e in a))
    passed = all(checks)
    record(10, "interpretability determinism", passed,
           f"{sum(checks)}/{len(checks)} fixture and scaling checks")
    assert passed


# --- 11 -------------------------------------------------------------------------

def test_11_persistence_roundtrips(tmp_path):
    fc = FeaturizerConfig(radius=2, nbits=128)
    records = make_synthetic_dataset(8, 6, seed=3)
    store = featurize_records(records, fc)
    save_feature_cache(tmp_path / "a.feat", store)
    save_feature_cache(tmp_path / "b.feat", load_feature_cache(tmp_path / "a.feat"))
    cache_same = (tmp_path / "a.feat").read_bytes() == (tmp_path / "b.feat").read_bytes()

    model = JovaModel(ModelConfig.jova1(fc, latent_dim=16, num_heads=2, ffn_dim=32))
    save_model(tmp_path / "a.ckpt", model, fc, {"scheme": "warm"})
    params, meta = load_checkpoint(tmp_path / "a.ckpt")
    save_checkpoint(tmp_path / "b.ckpt", params, meta)
    ckpt_same = (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    write_dataset(tmp_path / "d.csv", records)
    before_file = (tmp_path / "a.ckpt").read_bytes()
    loaded, _, _ = load_model(tmp_path / "a.ckpt")
    before = {k: v.tobytes() for k, v in loaded.state_dict().items()}
    code = main(["evaluate", "--checkpoint", str(tmp_path / "a.ckpt"),
                 "--data", str(tmp_path / "d.csv")])
    predict_samples(loaded, [store.sample(r, loaded.config.kinds) for r in records])
    after = {k: v.tobytes() for k, v in loaded.state_dict().items()}
    reloaded, _, _ = load_model(tmp_path / "a.ckpt")
    params_same = (before == after and code == 0
                   and (tmp_path / "a.ckpt").read_bytes() == before_file
                   and {k: v.tobytes() for k, v in reloaded.state_dict().items()} == before)
    passed = cache_same and ckpt_same and params_same
    record(11, "persistence round-trips", passed,
           f"checkpoint identical={ckpt_same}, feature cache identical={cache_same}, "
           f"evaluate leaves parameters identical={params_same}")
    assert passed


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
