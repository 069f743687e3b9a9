import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varbai.core import (
    ArmEstimator,
    BanditInstance,
    GaussianSource,
    InstanceError,
    PullRecord,
    RewardStream,
    TabularSource,
    estimator_update,
    gaps,
    load_instance,
    log2_ceil,
    min_gap,
    sample_reward,
    save_instance,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestBanditInstance:
    def test_derived_quantities(self):
        inst = BanditInstance([0.2, 1.0, 0.5], [1.0, 2.0, 3.0])
        assert inst.n_arms == 3
        assert inst.best_arm == 1
        assert inst.sigma_max_sq == 3.0
        assert inst.delta_min == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "means, variances",
        [
            ([1.0, 0.0], [1.0]),
            ([1.0], [1.0]),
            ([1.0, 0.0], [1.0, 0.0]),
            ([1.0, 0.0], [1.0, -1.0]),
            ([1.0, 1.0, 0.0], [1.0, 1.0, 1.0]),
            ([1.0, float("nan")], [1.0, 1.0]),
        ],
    )
    def test_rejects_invalid(self, means, variances):
        with pytest.raises(InstanceError):
            BanditInstance(means, variances)

    def test_arrays_are_read_only(self):
        inst = BanditInstance([1.0, 0.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            inst.means[0] = 5.0

    def test_file_round_trip_is_lossless(self, tmp_path):
        rng = np.random.default_rng(3)
        inst = BanditInstance(rng.normal(size=7), rng.uniform(0.01, 2, size=7))
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        back = load_instance(path)
        assert np.array_equal(back.means, inst.means)
        assert np.array_equal(back.variances, inst.variances)


class TestGaps:
    def test_ordered(self):
        g = gaps([1, 0.5, 0.2])
        assert np.allclose(g, [0, 0.5, 0.8])
        assert min_gap([1, 0.5, 0.2]) == pytest.approx(0.5)

    def test_unordered_instance(self):
        inst = BanditInstance([0, 1], [1, 1])
        assert inst.best_arm == 1
        assert np.allclose(gaps(inst), [1, 0])

    def test_closed_form_means(self):
        K = 4
        means = 1 - np.sqrt(np.arange(K) / K)
        assert np.allclose(gaps(means), [0, 0.5, math.sqrt(0.5), math.sqrt(0.75)])

    def test_non_unique_best(self):
        with pytest.raises(InstanceError):
            gaps([1.0, 1.0, 0.0])


class TestSampling:
    def test_gaussian_zero_variance_limit(self):
        # zero variance is rejected by BanditInstance; exercise the reward map directly
        src = GaussianSource(BanditInstance([5.0, 0.0], [1e-300, 1.0]))
        assert sample_reward(src, 0, np.random.default_rng(0)) == pytest.approx(5.0, abs=1e-100)

    def test_singleton_pool(self):
        src = TabularSource(([3.0], [1.0, 2.0]))
        assert sample_reward(src, 0, np.random.default_rng(0)) == 3.0

    def test_out_of_range_arm(self):
        src = GaussianSource(BanditInstance([1.0, 0.0], [1.0, 1.0]))
        with pytest.raises(IndexError):
            sample_reward(src, 2, np.random.default_rng(0))

    def test_empty_pool(self):
        with pytest.raises(InstanceError):
            TabularSource(([1.0], []))

    def test_gaussian_moments(self):
        src = GaussianSource(BanditInstance([0.0, -1.0], [1.0, 1.0]))
        y = RewardStream(src, np.random.default_rng(11)).pull_many(np.zeros(100_000, dtype=int))
        assert abs(y.mean()) < 0.02
        assert abs(y.var(ddof=1) - 1) < 0.05

    def test_tabular_mean_converges(self):
        pool = np.array([1.0, 2.0, 2.0, 5.0])
        src = TabularSource((pool, [0.0]))
        M = 100_000
        y = RewardStream(src, np.random.default_rng(5)).pull_many(np.zeros(M, dtype=int))
        assert abs(y.mean() - pool.mean()) < 3 * pool.std() / math.sqrt(M)
        assert set(np.unique(y)) <= set(pool)

    def test_tabular_effective_instance(self):
        src = TabularSource(([1.0, 3.0], [0.0, 0.0, 3.0]))
        inst = src.effective_instance()
        assert np.allclose(inst.means, [2.0, 1.0])
        assert np.allclose(inst.variances, [1.0, 2.0])


class TestRewardStream:
    @pytest.mark.parametrize("block", [1, 7, 4096])
    def test_pull_and_pull_many_agree(self, block):
        src = GaussianSource(BanditInstance([1.0, 0.0, 0.5], [1.0, 2.0, 0.5]))
        arms = np.random.default_rng(0).integers(0, 3, 500)
        a = RewardStream(src, np.random.default_rng(9), block)
        b = RewardStream(src, np.random.default_rng(9), block)
        one = [a.pull(int(i)) for i in arms[:200]] + list(a.pull_many(arms[200:350])) + [a.pull(int(i)) for i in arms[350:]]
        assert np.array_equal(np.array(one), b.pull_many(arms))
        assert a.pulls == b.pulls == 500

    def test_tabular_agree(self):
        src = TabularSource((np.arange(10.0), np.arange(3.0)))
        arms = np.array([0, 1, 1, 0, 0, 1] * 20)
        a = RewardStream(src, np.random.default_rng(2))
        b = RewardStream(src, np.random.default_rng(2))
        assert np.array_equal([a.pull(int(i)) for i in arms], b.pull_many(arms))


class TestEstimator:
    def test_empty(self):
        e = ArmEstimator()
        assert (e.count, e.mean, e.sum_sq_dev) == (0, 0.0, 0.0)
        with pytest.raises(ValueError):
            e.variance

    def test_first_update(self):
        e = estimator_update(ArmEstimator(), 4)
        assert (e.count, e.mean, e.sum_sq_dev) == (1, 4, 0)

    def test_update_is_non_mutating(self):
        e = ArmEstimator()
        estimator_update(e, 1.0)
        assert e.count == 0

    def test_two_points(self):
        e = ArmEstimator().update(1).update(3)
        assert e.mean == 2 and e.variance == 2

    def test_textbook_list(self):
        e = ArmEstimator()
        for y in [2, 4, 4, 4, 5, 5, 7, 9]:
            e.update(y)
        assert e.mean == pytest.approx(5, rel=1e-12)
        assert e.variance == pytest.approx(32 / 7, rel=1e-12)

    @given(st.lists(finite, min_size=2, max_size=60))
    def test_matches_batch_formulas(self, ys):
        e = ArmEstimator()
        for y in ys:
            e.update(y)
        ys = np.array(ys)
        assert e.count == ys.size
        assert math.isclose(e.mean, ys.mean(), rel_tol=1e-12, abs_tol=1e-9)
        assert math.isclose(e.variance, ys.var(ddof=1), rel_tol=1e-9, abs_tol=1e-7)

    @given(st.lists(finite, max_size=30), st.lists(finite, max_size=30))
    @settings(max_examples=200)
    def test_merge_equals_concatenation(self, a, b):
        merged = ArmEstimator.from_values(a).merge(ArmEstimator.from_values(b))
        whole = ArmEstimator.from_values(a + b)
        assert merged.count == whole.count
        assert math.isclose(merged.mean, whole.mean, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(merged.sum_sq_dev, whole.sum_sq_dev, rel_tol=1e-9, abs_tol=1e-6)

    def test_stable_for_large_offset(self):
        ys = 1e9 + np.array([4.0, 7.0, 13.0, 16.0])
        e = ArmEstimator()
        for y in ys:
            e.update(y)
        assert e.variance == pytest.approx(30.0, rel=1e-9)


def test_pull_record_line():
    assert PullRecord(1, 2, 3, 0.5).to_line() == "1\t2\t3\t0.5"


@pytest.mark.parametrize("k, m", [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (64, 6), (65, 7), (128, 7)])
def test_log2_ceil(k, m):
    assert log2_ceil(k) == m
