import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patternreg.metrics import (Baselines, EpochRecord, MetricsError,
                                MetricsReport, Summary, linreg_baseline, mae,
                                mean_predictor_mae, r2, render_curves, rmse)


def naive_mae(pred, target):
    return sum(abs(p - t) for p, t in zip(pred, target)) / len(pred)


def naive_rmse(pred, target):
    return math.sqrt(sum((p - t) ** 2 for p, t in zip(pred, target)) / len(pred))


def naive_r2(pred, target):
    tbar = sum(target) / len(target)
    ss_res = sum((p - t) ** 2 for p, t in zip(pred, target))
    ss_tot = sum((t - tbar) ** 2 for t in target)
    return 1 - ss_res / ss_tot


class TestMetricValues:
    def test_perfect_prediction(self):
        t = [1.0, 2.0, 3.0]
        assert mae(t, t) == 0.0
        assert rmse(t, t) == 0.0
        assert r2(t, t) == 1.0

    def test_small_case(self):
        assert mae([0.0, 0.0], [3.0, 4.0]) == 3.5
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))

    def test_mean_predictor_has_zero_r2(self):
        t = [1.0, 5.0, 9.0, 2.0]
        pred = [np.mean(t)] * 4
        assert r2(pred, t) == pytest.approx(0.0, abs=1e-12)

    def test_matches_naive_loops(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 200))
            p = rng.standard_normal(n) * rng.uniform(0.1, 100)
            t = rng.standard_normal(n) * rng.uniform(0.1, 100)
            assert mae(p, t) == pytest.approx(naive_mae(p, t), rel=1e-12)
            assert rmse(p, t) == pytest.approx(naive_rmse(p, t), rel=1e-12)
            assert r2(p, t) == pytest.approx(naive_r2(p, t), rel=1e-12)

    @given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)),
                    min_size=1, max_size=50))
    @settings(max_examples=80, deadline=None)
    def test_rmse_dominates_mae(self, pairs):
        p = [a for a, _ in pairs]
        t = [b for _, b in pairs]
        assert rmse(p, t) >= mae(p, t) - 1e-9

    def test_scaling_property(self):
        rng = np.random.default_rng(1)
        p = rng.standard_normal(40)
        t = rng.standard_normal(40)
        c = 3.7
        assert mae(c * p, c * t) == pytest.approx(c * mae(p, t), rel=1e-12)
        assert rmse(c * p, c * t) == pytest.approx(c * rmse(p, t), rel=1e-12)
        assert r2(c * p, c * t) == pytest.approx(r2(p, t), rel=1e-12)

    def test_r2_at_most_one(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            p = rng.standard_normal(30)
            t = rng.standard_normal(30)
            assert r2(p, t) <= 1.0


class TestMetricErrors:
    def test_length_mismatch(self):
        with pytest.raises(MetricsError, match="lengths differ"):
            mae([1.0], [1.0, 2.0])

    def test_empty_inputs(self):
        with pytest.raises(MetricsError, match="empty"):
            rmse([], [])

    def test_constant_targets_for_r2(self):
        with pytest.raises(MetricsError, match="constant"):
            r2([1.0, 2.0], [5.0, 5.0])


class TestBaselines:
    def test_linreg_recovers_linear_map(self):
        rng = np.random.default_rng(3)
        x = rng.random((500, 6))
        w = rng.standard_normal(6)
        y = x @ w + 2.5
        fold_of = np.arange(500) % 5
        _, _, r2_val = linreg_baseline(x, y, fold_of)
        assert r2_val >= 0.999

    def test_constant_features_rejected(self):
        x = np.full((20, 3), 2.0)
        y = np.arange(20.0)
        with pytest.raises(MetricsError, match="degenerate design"):
            linreg_baseline(x, y, np.arange(20) % 2)

    def test_mean_predictor_mae_by_hand(self):
        y = np.array([0.0, 10.0, 0.0, 10.0])
        fold_of = np.array([0, 0, 1, 1])
        # fold 0 validated with mean(fold1)=5, fold 1 with mean(fold0)=5
        assert mean_predictor_mae(y, fold_of) == 5.0


def small_report(epochs=4, folds=2):
    records = [
        EpochRecord(fold=f, epoch=e, train_loss=1.0 / (e + 1),
                    val_mae=2.0 - 0.1 * e + 0.01 * f,
                    val_rmse=3.0 - 0.1 * e, val_r2=0.1 * e)
        for f in range(folds) for e in range(epochs)
    ]
    return MetricsReport(records=records,
                         summary=Summary(mae=1.0, rmse=2.0, r2=0.5),
                         baselines=Baselines(3.0, 2.5, 3.5, 0.3))


class TestRenderCurves:
    def test_structure(self, tmp_path):
        report = small_report(epochs=200, folds=5)
        paths = render_curves(report, tmp_path)
        assert sorted(p.name for p in paths) == [
            "mae.svg", "metrics.csv", "r2.svg", "rmse.svg"]
        svg = (tmp_path / "mae.svg").read_text()
        assert svg.count("<polyline") == 5
        first_line = svg.split("<polyline")[1]
        assert first_line.count(",") == 200  # 200 points
        csv_text = (tmp_path / "metrics.csv").read_text().splitlines()
        assert csv_text[0] == "fold,epoch,train_loss,val_mae,val_rmse,val_r2"
        assert len(csv_text) == 1 + 200 * 5

    def test_deterministic_bytes(self, tmp_path):
        report = small_report()
        render_curves(report, tmp_path / "a")
        render_curves(report, tmp_path / "b")
        for name in ("mae.svg", "rmse.svg", "r2.svg", "metrics.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_empty_records_rejected(self, tmp_path):
        report = MetricsReport(records=[], summary=Summary(0, 0, 0),
                               baselines=Baselines(0, 0, 0, 0))
        with pytest.raises(MetricsError, match="empty"):
            render_curves(report, tmp_path)

    def test_report_round_trips_through_dict(self):
        report = small_report()
        clone = MetricsReport.from_dict(report.to_dict())
        assert clone.records == report.records
        assert clone.summary == report.summary
        assert clone.baselines == report.baselines
