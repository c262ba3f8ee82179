import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscofit.errors import DomainError
from viscofit.metrics import MetricReport, r_squared, report, smape


class TestRSquared:
    def test_perfect_prediction(self):
        y = np.array([0.0, 1.0, 3.0, 7.0])
        assert r_squared(y, y) == pytest.approx(1.0, abs=1e-15)

    def test_mean_predictor_scores_zero(self):
        y = np.array([1.0, 2.0, 3.0, 6.0])
        pred = np.full_like(y, y.mean())
        assert r_squared(pred, y) == pytest.approx(0.0, abs=1e-15)

    def test_anticorrelated_hand_value(self):
        target = np.array([0.0, 1.0, 2.0])
        pred = np.array([2.0, 1.0, 0.0])
        assert r_squared(pred, target) == pytest.approx(-3.0, abs=1e-12)

    def test_constant_target_rejected(self):
        with pytest.raises(DomainError):
            r_squared(np.array([1.0, 2.0]), np.array([3.0, 3.0]))

    def test_one_iff_exact(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=30)
        p = y.copy()
        p[4] += 1e-6
        assert r_squared(p, y) < 1.0


class TestSmape:
    def test_perfect_prediction(self):
        y = np.array([1.0, -2.0, 3.0])
        assert smape(y, y) == pytest.approx(0.0, abs=1e-15)

    def test_sign_flip_attains_bound(self):
        y = np.array([1.0, -2.0, 3.0])
        assert smape(-y, y) == pytest.approx(100.0, abs=1e-12)

    def test_hand_value(self):
        assert smape(np.array([2.0, 2.0]), np.array([1.0, 2.0])) == pytest.approx(
            100.0 / 2.0 * (1.0 / 3.0), abs=1e-12)

    def test_zero_targets_filtered(self):
        target = np.array([0.0, 1.0, 2.0])
        pred = np.array([5.0, 1.0, 2.0])  # the zero-target point is ignored
        assert smape(pred, target) == pytest.approx(0.0, abs=1e-15)

    def test_all_zero_targets_rejected(self):
        with pytest.raises(DomainError):
            smape(np.array([1.0, 2.0]), np.zeros(2))

    def test_predicted_zero_against_nonzero_counts_full(self):
        assert smape(np.array([0.0]), np.array([3.0])) == pytest.approx(100.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=12)
        b = rng.normal(size=12)
        a[a == 0.0] = 0.5
        b[b == 0.0] = 0.5
        assert smape(a, b) == pytest.approx(smape(b, a), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-6, 1e6), st.integers(0, 10_000))
    def test_scale_invariance(self, k, seed):
        rng = np.random.default_rng(seed)
        target = rng.normal(size=10)
        target[target == 0.0] = 1.0
        pred = target + rng.normal(size=10)
        assert smape(k * pred, k * target) == pytest.approx(
            smape(pred, target), rel=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            t = rng.normal(size=20)
            t[t == 0.0] = 1.0
            p = rng.normal(size=20)
            val = smape(p, t)
            assert 0.0 <= val <= 100.0


def test_report_counts():
    target = np.array([0.0, 1.0, 2.0, 0.0, 4.0])
    pred = np.array([0.1, 1.0, 2.0, 0.0, 4.0])
    m = report(pred, target)
    assert isinstance(m, MetricReport)
    assert m.n_points == 5
    assert m.n_filtered_zero == 2
    assert m.r_squared < 1.0
    assert m.smape == pytest.approx(0.0)
