import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varbai.core import ArmEstimator, BanditInstance, GaussianSource, RewardStream
from varbai.halving import StageState, sequential_halving
from varbai.rules import (
    AdaptiveVariance,
    KnownVariance,
    RoundRobin,
    VarianceBoundUndefined,
    chi_square_bounds,
    forced_pulls,
    ideal_allocation,
    make_rule,
    sh_next,
    shadavar_next,
    shvar_next,
    variance_ucb,
)


def state_with_counts(surviving, counts, round_=1, budget=100):
    state = StageState.fresh(1, surviving, budget)
    for i, c in zip(surviving, counts):
        state.estimators[i] = ArmEstimator(c, 0.0, 0.0)
    state.round = round_
    return state


class TestRoundRobin:
    def test_order(self):
        picks = [sh_next(state_with_counts([7, 2, 9], [0, 0, 0], t)) for t in (1, 2, 4)]
        assert picks == [7, 2, 7]

    @pytest.mark.parametrize("k, n_s, expected", [(2, 5, [3, 2]), (4, 8, [2, 2, 2, 2])])
    def test_counts(self, k, n_s, expected):
        seq = RoundRobin().schedule(list(range(k)), n_s)
        assert np.bincount(seq, minlength=k).tolist() == expected


class TestKnownVariance:
    def test_picks_larger_variance(self):
        assert shvar_next(state_with_counts([0, 1], [1, 1]), [1, 3]) == 1

    def test_unpulled_first_by_index(self):
        assert shvar_next(state_with_counts([4, 1, 3], [5, 0, 0]), [1, 1, 1, 9, 1]) == 1

    def test_two_arm_stage(self):
        assert KnownVariance([1, 3]).stage_counts([0, 1], 8) == {0: 2, 1: 6}

    def test_equal_variances_reproduce_round_robin(self):
        for k in range(2, 9):
            for n_s in range(k, 40):
                arms = list(range(k))
                assert np.array_equal(KnownVariance(np.full(k, 0.7)).schedule(arms, n_s), RoundRobin().schedule(arms, n_s))

    def test_sh_equals_shvar_under_equal_variance(self):
        inst = BanditInstance(np.linspace(1, 0, 11), np.full(11, 0.5))
        a = sequential_halving(700, RoundRobin(), GaussianSource(inst), 3)
        b = sequential_halving(700, KnownVariance(inst.variances), GaussianSource(inst), 3)
        assert a.identified == b.identified
        assert [s.counts for s in a.stages] == [s.counts for s in b.stages]

    def test_schedule_matches_select_loop(self):
        var = np.array([0.2, 1.3, 0.4, 2.2, 0.9])
        rule = KnownVariance(var)
        surviving = [4, 1, 3, 0]
        state = StageState.fresh(1, surviving, 37)
        seq = []
        for t in range(1, 38):
            state.round = t
            i = rule.select(state)
            state.estimators[i].update(0.0)
            seq.append(i)
        assert seq == rule.schedule(surviving, 37).tolist()

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            KnownVariance([1.0, 0.0])


def g_optimal_value(variances, n_s):
    """Exhaustive minimum of max_i var_i / N_i over integer N_i >= 1 summing to n_s."""
    k = len(variances)
    best = math.inf
    for cut in itertools.combinations(range(1, n_s), k - 1):
        counts = np.diff((0,) + cut + (n_s,))
        best = min(best, max(v / c for v, c in zip(variances, counts)))
    return best


class TestAllocation:
    def test_direct(self):
        assert np.allclose(ideal_allocation([1, 2, 5], 8), [1, 2, 5])

    def test_symmetry(self):
        assert np.allclose(ideal_allocation([0.4] * 5, 15), 3)

    def test_integer_ideal_counts(self):
        lam = ideal_allocation([1, 3], 8)
        assert np.allclose(lam, [2, 6])
        assert KnownVariance([1, 3]).stage_counts([0, 1], 8) == {0: 2, 1: 6}

    @given(st.lists(st.integers(1, 8), min_size=2, max_size=8), st.integers(1, 8))
    @settings(max_examples=300)
    def test_integer_lambda_is_exact(self, weights, scale):
        # variances proportional to integer weights; n_s a multiple of their sum
        n_s = sum(weights) * scale
        var = np.array(weights, dtype=float) * 0.37
        counts = KnownVariance(var).stage_counts(list(range(len(var))), n_s)
        lam = ideal_allocation(var, n_s)
        assert [counts[i] for i in range(len(var))] == [round(x) for x in lam]
        assert np.allclose(lam, np.round(lam))

    @pytest.mark.parametrize("variances, n_s", [([1, 2], 7), ([0.5, 1, 3], 9), ([1, 1, 2, 5], 12), ([3, 1, 1], 5)])
    def test_g_optimal(self, variances, n_s):
        counts = KnownVariance(variances).stage_counts(list(range(len(variances))), n_s)
        got = max(v / counts[i] for i, v in enumerate(variances))
        assert got == pytest.approx(g_optimal_value(variances, n_s), rel=1e-12)


class TestChiSquare:
    def test_direct(self):
        lo, hi = chi_square_bounds(16, math.exp(-1))
        assert lo == pytest.approx(0.5) and hi == pytest.approx(1.625)

    def test_limit(self):
        lo, hi = chi_square_bounds(10**12, 0.05)
        assert lo == pytest.approx(1, abs=1e-5) and hi == pytest.approx(1, abs=1e-5)

    def test_coverage_chi2(self):
        from scipy import stats

        N, delta = 30, 0.1
        lo, hi = chi_square_bounds(N, delta)
        # exact tail probabilities of chi2_N / N
        assert stats.chi2.cdf(lo * N, N) <= delta
        assert stats.chi2.sf(hi * N, N) <= delta
        ratio = np.random.default_rng(0).chisquare(N, 100_000) / N
        tol = 3 * math.sqrt(delta * (1 - delta) / 1e5)
        assert np.mean(ratio < lo) <= delta + tol
        assert np.mean(ratio > hi) <= delta + tol


class TestVarianceUcb:
    def test_direct(self):
        est = ArmEstimator(17, 0.0, 2.0 * 16)
        assert variance_ucb(est, math.exp(-1)).value == pytest.approx(4.0)

    def test_limit(self):
        est = ArmEstimator(10**9, 0.0, 2.0 * (10**9 - 1))
        assert variance_ucb(est, 0.5).value == pytest.approx(2.0, rel=1e-3)

    def test_undefined(self):
        with pytest.raises(VarianceBoundUndefined):
            variance_ucb(ArmEstimator(5, 0.0, 1.0), 0.05)

    def test_at_least_empirical(self):
        est = ArmEstimator.from_values(np.random.default_rng(1).normal(size=40))
        assert variance_ucb(est, 0.05).value >= est.variance

    def test_monotone(self):
        est = ArmEstimator(50, 0.0, 49.0)
        assert variance_ucb(est, 0.1).value < variance_ucb(est, 0.01).value
        bigger = ArmEstimator(80, 0.0, 79.0)
        assert variance_ucb(bigger, 0.05).value < variance_ucb(est, 0.05).value

    def test_coverage(self):
        rng = np.random.default_rng(7)
        N, delta, trials = 50, 0.05, 100_000
        # sample variance of N + 1 standard normals is chi2_N / N
        s2 = rng.chisquare(N, trials) / N
        u = s2 / (1 - 2 * math.sqrt(math.log(1 / delta) / N))
        assert np.mean(u >= 1.0) >= 1 - delta - 3 * math.sqrt(delta * (1 - delta) / trials)


class TestAdaptive:
    def test_forced_length_defines_bound(self):
        for delta in [0.5, 0.2, 0.05, 0.01, 1e-6, math.exp(-1), math.exp(-2.5)]:
            f = forced_pulls(delta)
            assert f - 1 > 4 * math.log(1 / delta)
            assert f - 2 <= 4 * math.log(1 / delta)
            variance_ucb(ArmEstimator(f, 0.0, 1.0), delta)

    def test_forced_length_non_integer_case(self):
        assert forced_pulls(0.05) == math.ceil(4 * math.log(20) + 1)

    def test_forced_phase_counts(self):
        rule = AdaptiveVariance(0.05)
        src = GaussianSource(BanditInstance([1.0, 0.0], [1.0, 1.0]))
        state = StageState.fresh(1, [0, 1], 2 * rule.forced + 3)
        arms, _ = rule.run_stage(state, RewardStream(src, np.random.default_rng(0)))
        assert arms[: 2 * rule.forced].tolist() == [0, 1] * rule.forced
        assert sum(state.counts()) == 2 * rule.forced + 3
        assert not state.warnings
        state = StageState.fresh(1, [0, 1], 2 * rule.forced)
        rule.run_stage(state, RewardStream(src, np.random.default_rng(0)))
        assert state.warnings

    def test_picks_larger_score(self):
        delta = 0.05
        f = forced_pulls(delta)
        state = StageState.fresh(1, [0, 1], 1000)
        state.estimators[0] = ArmEstimator.from_values(np.random.default_rng(0).normal(0, 0.2, f))
        state.estimators[1] = ArmEstimator.from_values(np.random.default_rng(1).normal(0, 3.0, f))
        state.round = 2 * f + 1
        assert shadavar_next(state, delta) == 1

    def test_degrades_with_warning(self):
        res = sequential_halving(10, AdaptiveVariance(0.05), GaussianSource(BanditInstance([1, 0], [1, 1])), 0)
        assert res.stages[0].counts == (5, 5)
        assert res.warnings and "round robin" in res.warnings[0]

    def test_count_ratio(self):
        src = GaussianSource(BanditInstance([0.0, 0.1], [1.0, 9.0]))
        rule = AdaptiveVariance(0.05)
        ok = 0
        seeds = 200
        for seed in range(seeds):
            state = StageState.fresh(1, [0, 1], 2000)
            rule.run_stage(state, RewardStream(src, np.random.default_rng(seed)))
            n0, n1 = state.counts()
            ok += 5 <= n1 / n0 <= 13
        assert ok / seeds >= 0.95

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            AdaptiveVariance(1.0)


def test_make_rule():
    assert isinstance(make_rule("sh"), RoundRobin)
    assert isinstance(make_rule("shvar", [1, 2]), KnownVariance)
    assert make_rule("shadavar", delta=0.1).delta == 0.1
    with pytest.raises(KeyError):
        make_rule("nope")
    with pytest.raises(ValueError):
        make_rule("shvar")
