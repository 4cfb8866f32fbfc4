import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jova.errors import EmptyInput, MalformedRow, NoComparablePairs, ZeroVariance
from jova.metrics import MetricsReport, concordance_index, pearson, r2, rmse


def brute_force_ci(pred, truth):
    num = 0.0
    den = 0
    for i in range(len(truth)):
        for j in range(len(truth)):
            if truth[i] > truth[j]:
                den += 1
                if pred[i] > pred[j]:
                    num += 1
                elif pred[i] == pred[j]:
                    num += 0.5
    return num / den


def covariance_r2(pred, truth):
    cov = np.cov(pred, truth, bias=True)
    return cov[0, 1] ** 2 / (cov[0, 0] * cov[1, 1])


class TestRmse:
    def test_exact(self):
        assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
        assert rmse([1, -1], [0, 0]) == 1.0

    def test_oracle(self, rng):
        p, t = rng.normal(size=100), rng.normal(size=100)
        assert rmse(p, t) == pytest.approx(math.sqrt(sum((a - b) ** 2 for a, b in zip(p, t)) / 100),
                                           abs=1e-12)

    def test_errors(self):
        with pytest.raises(EmptyInput):
            rmse([], [])
        with pytest.raises(ValueError):
            rmse([1, 2], [1])


class TestConcordance:
    def test_perfect(self):
        assert concordance_index([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0

    def test_constant_predictions(self):
        assert concordance_index([5, 5, 5], [1, 2, 3]) == 0.5

    def test_reversed(self):
        assert concordance_index([3, 2, 1], [1, 2, 3]) == 0.0

    def test_equal_labels_excluded(self):
        assert concordance_index([1, 2, 0], [1, 1, 2]) == 0.0

    def test_no_comparable_pairs(self):
        with pytest.raises(NoComparablePairs):
            concordance_index([1, 2], [3, 3])
        with pytest.raises(NoComparablePairs):
            concordance_index([1], [3])

    def test_matches_brute_force_with_ties(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 40))
            pred = rng.integers(0, 5, size=n).astype(float)
            truth = rng.integers(0, 5, size=n).astype(float)
            if len(set(truth)) < 2:
                continue
            assert concordance_index(pred, truth) == brute_force_ci(pred, truth)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=40),
           st.sampled_from(["exp", "cube", "affine", "arctan"]))
    def test_monotone_invariance(self, pairs, transform):
        pred = np.array([p for p, _ in pairs])
        truth = np.array([t for _, t in pairs])
        if len(set(truth)) < 2:
            return
        f = {"exp": lambda x: np.exp(x / 50), "cube": lambda x: x ** 3,
             "affine": lambda x: 3 * x + 7, "arctan": np.arctan}[transform]
        moved = f(pred)
        # only meaningful when the transform keeps distinct values distinct
        if len(set(moved)) != len(set(pred)):
            return
        assert concordance_index(moved, truth) == concordance_index(pred, truth)


class TestR2:
    def test_linear(self):
        t = np.array([1.0, 2.0, 4.0, 8.0])
        assert r2(3 * t + 1, t) == pytest.approx(1.0)
        assert r2(-t, t) == pytest.approx(1.0)
        assert r2(-t, t, squared=False) == pytest.approx(-1.0)

    def test_oracle(self, rng):
        for _ in range(20):
            p, t = rng.normal(size=30), rng.normal(size=30)
            assert r2(p, t) == pytest.approx(covariance_r2(p, t), abs=1e-10)

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            pearson([1, 1, 1], [1, 2, 3])


class TestReport:
    def test_population_std(self):
        report = MetricsReport()
        for fold, value in enumerate([0.2, 0.3]):
            report.add("warm", fold, 0, [value], [0.0])
        mean, std = report.aggregate()["warm"]["rmse"]
        assert mean == pytest.approx(0.25) and std == pytest.approx(0.05)

    def test_single_fold_std_zero(self):
        report = MetricsReport()
        report.add("warm", 0, 0, [1.0, 2.0, 3.0], [1.5, 2.0, 2.5])
        assert report.aggregate()["warm"]["ci"][1] == 0.0

    def test_mean_over_folds_then_seeds(self):
        report = MetricsReport()
        report.add("warm", 0, 0, [1.0], [0.0])
        report.add("warm", 1, 0, [3.0], [0.0])
        report.add("warm", 0, 1, [5.0], [0.0])
        assert report.aggregate()["warm"]["rmse"][0] == pytest.approx((2.0 + 5.0) / 2)

    def test_degenerate_fold_gives_nan(self):
        report = MetricsReport()
        row = report.add("warm", 0, 0, [1.0, 1.0], [2.0, 2.0])
        assert math.isnan(row.ci) and math.isnan(row.r2)

    def test_csv_roundtrip(self, tmp_path, rng):
        report = MetricsReport()
        for seed in (1, 2):
            for fold in range(5):
                report.add("cold_drug", fold, seed, rng.normal(size=10), rng.normal(size=10))
        assert len(report.rows) == 10
        report.write_csv(tmp_path / "m.csv")
        back = MetricsReport.read_csv(tmp_path / "m.csv")
        assert back.rows == report.rows
        back.write_csv(tmp_path / "n.csv")
        assert (tmp_path / "m.csv").read_bytes() == (tmp_path / "n.csv").read_bytes()
        assert "cold_drug" in back.format_table()

    def test_bad_csv(self, tmp_path):
        (tmp_path / "m.csv").write_text("nope\n")
        with pytest.raises(MalformedRow):
            MetricsReport.read_csv(tmp_path / "m.csv")
