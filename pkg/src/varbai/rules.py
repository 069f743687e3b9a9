"""Per-round pull rules for sequential halving and the math behind them.

Three rules are provided: round robin (``sh``), greedy G-optimal allocation
with known variances (``shvar``) and the same greedy allocation driven by
chi-square upper confidence bounds on unknown variances (``shadavar``).

Every rule has a reference ``select(state)`` that picks one arm from the
current :class:`~varbai.halving.StageState`, and a ``run_stage`` that plays a
whole stage. ``run_stage`` is what the engine calls; the overrides below are
faster but pull exactly the arms ``select`` would.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .core import ArmEstimator

DEFAULT_DELTA = 0.05


class VarianceBoundUndefined(ValueError):
    """Too few observations for the variance upper bound to exist."""


@dataclass(frozen=True)
class VarianceUpperBound:
    value: float
    pulls_used: int
    delta: float


def chi_square_bounds(N: int, delta: float) -> tuple:
    """Lower and upper multiplicative deviation factors for ``sigma_hat^2 / sigma^2``.

    For Gaussian data with ``N`` degrees of freedom, each one-sided event
    ``ratio < lower`` and ``ratio > upper`` has probability at most ``delta``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    log_term = math.log(1 / delta)
    r = math.sqrt(log_term / N)
    return 1 - 2 * r, 1 + 2 * r + 2 * log_term / N


def variance_ucb(est: ArmEstimator, delta: float) -> VarianceUpperBound:
    """High-probability upper bound on an arm's reward variance.

    Requires ``est.count - 1 > 4 log(1 / delta)``.
    """
    N = est.count - 1
    log_term = math.log(1 / delta)
    if N <= 4 * log_term:
        raise VarianceBoundUndefined(
            f"variance bound needs more than {4 * log_term + 1:.3f} observations, got {est.count}"
        )
    value = est.variance / (1 - 2 * math.sqrt(log_term / N))
    return VarianceUpperBound(value, est.count, delta)


def forced_pulls(delta: float) -> int:
    """Pulls per arm in the forced round-robin phase.

    The smallest integer ``f`` with ``f - 1 > 4 log(1 / delta)``, so the
    variance bound is defined as soon as the phase ends.
    """
    return math.floor(4 * math.log(1 / delta)) + 2


def ideal_allocation(variances, n_s: int) -> np.ndarray:
    """Variance-proportional split of ``n_s`` pulls (possibly fractional)."""
    variances = np.asarray(variances, dtype=float)
    if np.any(variances <= 0):
        raise ValueError("variances must be positive")
    if n_s < 1:
        raise ValueError("n_s must be at least 1")
    return variances / variances.sum() * n_s


def _argmax_lowest(scores: dict) -> int:
    best = max(scores.values())
    return min(i for i, v in scores.items() if v == best)


def _batch_estimators(state, arms: np.ndarray, rewards: np.ndarray) -> None:
    for i in state.surviving:
        state.estimators[i] = state.estimators[i].merge(ArmEstimator.from_values(rewards[arms == i]))


class PullRule:
    name = ""

    def select(self, state) -> int:
        raise NotImplementedError

    def run_stage(self, state, stream):
        """Play ``state.budget`` rounds one at a time via :meth:`select`."""
        arms, rewards = [], []
        for t in range(state.round, state.budget + 1):
            state.round = t
            i = self.select(state)
            y = stream.pull(i)
            state.estimators[i].update(y)
            arms.append(i)
            rewards.append(y)
        state.round = state.budget + 1
        return np.array(arms, dtype=np.int64), np.array(rewards)


class ScheduledRule(PullRule):
    """A rule whose pulls do not depend on observed rewards."""

    def schedule(self, surviving, budget: int) -> np.ndarray:
        raise NotImplementedError

    def run_stage(self, state, stream):
        arms = self.schedule(state.surviving, state.budget)
        rewards = stream.pull_many(arms)
        _batch_estimators(state, arms, rewards)
        state.round = state.budget + 1
        return arms, rewards


class RoundRobin(ScheduledRule):
    """Pull the surviving arms cyclically in their stored order."""

    name = "sh"

    def select(self, state) -> int:
        return state.surviving[(state.round - 1) % len(state.surviving)]

    def schedule(self, surviving, budget: int) -> np.ndarray:
        return np.resize(np.asarray(surviving, dtype=np.int64), budget)


class KnownVariance(ScheduledRule):
    """Pull the arm whose mean estimate has the largest variance ``sigma_i^2 / N_i``.

    Unpulled arms score infinity; ties go to the lowest arm index.
    """

    name = "shvar"

    def __init__(self, variances):
        variances = np.asarray(variances, dtype=float)
        if np.any(variances <= 0):
            raise ValueError("known variances must be strictly positive")
        self.variances = variances

    def select(self, state) -> int:
        scores = {}
        for i in state.surviving:
            n = state.estimators[i].count
            scores[i] = math.inf if n == 0 else self.variances[i] / n
        return _argmax_lowest(scores)

    def schedule(self, surviving, budget: int) -> np.ndarray:
        var = self.variances
        heap = [(-math.inf, i) for i in sorted(surviving)]
        counts = dict.fromkeys(surviving, 0)
        seq = np.empty(budget, dtype=np.int64)
        for t in range(budget):
            _, i = heapq.heappop(heap)
            seq[t] = i
            counts[i] += 1
            heapq.heappush(heap, (-var[i] / counts[i], i))
        return seq

    def stage_counts(self, surviving, budget: int) -> dict:
        seq = self.schedule(surviving, budget)
        return {i: int(np.count_nonzero(seq == i)) for i in surviving}


class AdaptiveVariance(PullRule):
    """Greedy allocation on upper confidence bounds of unknown variances.

    Each stage starts with ``forced_pulls(delta)`` round-robin pulls per arm.
    If the stage budget cannot cover that plus one more pull, the whole stage
    is played round robin and a warning is attached to the state.
    """

    name = "shadavar"

    def __init__(self, delta: float = DEFAULT_DELTA):
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        self.delta = delta
        self.forced = forced_pulls(delta)
        self._log_term = math.log(1 / delta)

    def forced_rounds(self, n_arms: int) -> int:
        return n_arms * self.forced

    def degraded(self, n_arms: int, budget: int) -> bool:
        return budget < self.forced_rounds(n_arms) + 1

    def _score(self, est: ArmEstimator) -> float:
        return variance_ucb(est, self.delta).value / est.count

    def select(self, state) -> int:
        k = len(state.surviving)
        if self.degraded(k, state.budget) or state.round <= self.forced_rounds(k):
            return state.surviving[(state.round - 1) % k]
        return _argmax_lowest({i: self._score(state.estimators[i]) for i in state.surviving})

    def run_stage(self, state, stream):
        k = len(state.surviving)
        budget = state.budget
        if self.degraded(k, budget):
            state.warnings.append(
                f"shadavar: stage budget {budget} cannot fit {self.forced} forced pulls for "
                f"each of {k} arms plus one; stage played round robin"
            )
            forced = budget
        else:
            forced = self.forced_rounds(k)
        arms = np.resize(np.asarray(state.surviving, dtype=np.int64), forced)
        rewards = stream.pull_many(arms)
        _batch_estimators(state, arms, rewards)
        if forced == budget:
            state.round = budget + 1
            return arms, rewards

        log_term = self._log_term
        est = state.estimators
        heap = [(-self._score(est[i]), i) for i in state.surviving]
        heapq.heapify(heap)
        rest_arms, rest_rewards = [], []
        for _ in range(budget - forced):
            _, i = heapq.heappop(heap)
            y = stream.pull(i)
            e = est[i].update(y)
            rest_arms.append(i)
            rest_rewards.append(y)
            N = e.count - 1
            u = (e.sum_sq_dev / N) / (1 - 2 * math.sqrt(log_term / N))
            heapq.heappush(heap, (-u / e.count, i))
        state.round = budget + 1
        return (
            np.concatenate([arms, np.array(rest_arms, dtype=np.int64)]),
            np.concatenate([rewards, np.array(rest_rewards)]),
        )


def sh_next(state) -> int:
    return RoundRobin().select(state)


def shvar_next(state, variances) -> int:
    return KnownVariance(variances).select(state)


def shadavar_next(state, delta: float) -> int:
    return AdaptiveVariance(delta).select(state)


def make_rule(name: str, variances=None, delta: float = DEFAULT_DELTA) -> PullRule:
    if name == "sh":
        return RoundRobin()
    if name == "shvar":
        if variances is None:
            raise ValueError("shvar needs the arm variances")
        return KnownVariance(variances)
    if name == "shadavar":
        return AdaptiveVariance(delta)
    raise KeyError(f"unknown pull rule {name!r}")
