"""Comparison algorithms and the name registry shared by the harness and CLI.

GapE and GapE-V receive their complexity parameter ``H`` and reward bound
``b`` computed from the true instance, as in the benchmark protocol. Their
exploration parameter is rescaled so that their error guarantee is on the
same footing as the halving algorithms (``H -> H c / c'``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ArmEstimator, BanditInstance, BudgetError, RewardStream, as_rng, log2_ceil
from .halving import RunResult, StageRecord, eliminate, sequential_halving
from .rules import DEFAULT_DELTA, make_rule

DEFAULT_GAMMA = 1.96
GAPE_C = 1 / 144
GAPEV_C = 1 / 512


@dataclass(frozen=True)
class BaselineConfig:
    b: float
    H: float
    c: float
    c_prime: float
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.b <= 0 or self.H <= 0 or self.gamma < 0:
            raise ValueError("b and H must be positive and gamma non-negative")


@dataclass(frozen=True)
class AlgorithmParams:
    delta: float = DEFAULT_DELTA
    gamma: float = DEFAULT_GAMMA
    c_gape: float = GAPE_C
    c_gapev: float = GAPEV_C


def _record(arms, counts, ests) -> StageRecord:
    return StageRecord(tuple(arms), tuple(int(c) for c in counts), tuple(e.mean for e in ests))


def _best_by_mean(ests, arms) -> int:
    return eliminate({a: e.mean for a, e in zip(arms, ests)}, 1, {a: e.count for a, e in zip(arms, ests)})[0]


def uniform_allocation(n: int, source, rng=None) -> RunResult:
    """Pull every arm ``floor(n / K)`` times and return the best empirical mean."""
    k = source.n_arms
    per_arm = n // k
    if per_arm < 1:
        raise BudgetError(f"budget {n} is smaller than the number of arms {k}")
    stream = RewardStream(source, as_rng(rng))
    arms = np.repeat(np.arange(k), per_arm)
    rewards = stream.pull_many(arms).reshape(k, per_arm)
    ests = [ArmEstimator.from_values(r) for r in rewards]
    arm_ids = list(range(k))
    return RunResult(_best_by_mean(ests, arm_ids), (_record(arm_ids, [per_arm] * k, ests),), k * per_arm, "unif")


def support_bound(instance: BanditInstance, n: int) -> float:
    """``max_i mu_i + sigma_i sqrt(log n)``: likely bound on ``n`` Gaussian draws."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return float(np.max(instance.means + np.sqrt(instance.variances) * math.sqrt(math.log(n))))


compute_support_bound = support_bound


def _true_gaps(instance: BanditInstance) -> np.ndarray:
    g = instance.gaps()
    g[instance.best_arm] = instance.delta_min
    return g


def gape_complexity(instance: BanditInstance, b: float) -> float:
    """``sum_k b^2 / Delta_k^2`` with the best arm's gap set to the minimum gap."""
    return float(np.sum(b**2 / _true_gaps(instance) ** 2))


def gapev_complexity(instance: BanditInstance, b: float) -> float:
    """``sum_k (sigma_k + sqrt(sigma_k^2 + 16/3 b Delta_k))^2 / Delta_k^2``."""
    g = _true_gaps(instance)
    sd = np.sqrt(instance.variances)
    return float(np.sum((sd + np.sqrt(instance.variances + 16 / 3 * b * g)) ** 2 / g**2))


def halving_rate_constant(k: int) -> float:
    """``c' = 1 / (4 log2 K)``."""
    return 1 / (4 * math.log2(k))


def baseline_config(instance: BanditInstance, n: int, variant: str = "gape", params: AlgorithmParams = AlgorithmParams()) -> BaselineConfig:
    b = support_bound(instance, n)
    if variant == "gape":
        H, c = gape_complexity(instance, b), params.c_gape
    elif variant == "gapev":
        H, c = gapev_complexity(instance, b), params.c_gapev
    else:
        raise KeyError(variant)
    return BaselineConfig(b, H, c, halving_rate_constant(instance.n_arms), params.gamma)


def exploration_parameter(n: int, k: int, config: BaselineConfig, variant: str = "gape") -> float:
    """Exploration parameter ``a`` with ``H`` replaced by ``H c / c'``."""
    H = config.H * config.c / config.c_prime
    if variant == "gape":
        return 4 / 9 * (n - k) / H
    return 8 / 9 * (n - 2 * k) / H


def empirical_gaps(means) -> np.ndarray:
    """``max_j mu_j - mu_i``; the empirically best arm gets its margin over the runner-up."""
    means = np.asarray(means, dtype=float)
    order = np.argsort(-means, kind="stable")
    g = means[order[0]] - means
    g[order[0]] = means[order[0]] - means[order[1]]
    return g


def gape_width(b: float, a: float, counts) -> np.ndarray:
    return b * np.sqrt(a / np.asarray(counts, dtype=float))


def gapev_width(b: float, a: float, variances, counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    return np.sqrt(2 * a * np.asarray(variances) / counts) + 7 * a * b / (3 * (counts - 1))


def gape_index(means, counts, b: float, a: float) -> np.ndarray:
    return -empirical_gaps(means) + gape_width(b, a, counts)


def gapev_index(means, variances, counts, b: float, a: float) -> np.ndarray:
    return -empirical_gaps(means) + gapev_width(b, a, variances, counts)


def gap_exploration(n: int, source, config: BaselineConfig, rng=None, variant: str = "gape") -> RunResult:
    """Gap-based exploration: pull the arm with the largest gap index each round."""
    k = source.n_arms
    init = 1 if variant == "gape" else 2
    if n < init * k:
        raise BudgetError(f"{variant} needs at least {init * k} pulls, got {n}")
    a = exploration_parameter(n, k, config, variant)
    stream = RewardStream(source, as_rng(rng))
    ests = [ArmEstimator() for _ in range(k)]
    first = np.tile(np.arange(k), init)
    for arm, y in zip(first, stream.pull_many(first)):
        ests[arm].update(float(y))
    means = np.array([e.mean for e in ests])
    counts = np.array([e.count for e in ests], dtype=float)
    ssd = np.array([e.sum_sq_dev for e in ests])
    for _ in range(n - init * k):
        if variant == "gape":
            index = gape_index(means, counts, config.b, a)
        else:
            index = gapev_index(means, ssd / (counts - 1), counts, config.b, a)
        i = int(np.argmax(index))
        e = ests[i].update(stream.pull(i))
        means[i], counts[i], ssd[i] = e.mean, e.count, e.sum_sq_dev
    arm_ids = list(range(k))
    return RunResult(_best_by_mean(ests, arm_ids), (_record(arm_ids, counts, ests),), n, variant)


def gape_run(n: int, source, config: BaselineConfig, rng=None) -> RunResult:
    return gap_exploration(n, source, config, rng, "gape")


def gapev_run(n: int, source, config: BaselineConfig, rng=None) -> RunResult:
    return gap_exploration(n, source, config, rng, "gapev")


def vbr_stage_budgets(n: int, k: int) -> list:
    """Per-stage budgets for ``K - 1`` rejection stages.

    Successive-rejects phase lengths, raised to at least one pull per surviving
    arm; any excess this creates is taken back from the earliest stages.
    """
    if n < k * (k + 1) // 2:
        raise BudgetError(f"vbr needs at least K(K+1)/2 = {k * (k + 1) // 2} pulls, got {n}")
    log_bar = 0.5 + sum(1 / i for i in range(2, k + 1))
    lengths = [0] + [math.ceil((n - k) / (log_bar * (k + 1 - j))) for j in range(1, k)]
    sizes = [k + 1 - j for j in range(1, k)]
    budgets = [max(sz, sz * (lengths[j] - lengths[j - 1])) for j, sz in zip(range(1, k), sizes)]
    excess = sum(budgets) - n
    for j in range(len(budgets)):
        if excess <= 0:
            break
        cut = min(excess, budgets[j] - sizes[j])
        budgets[j] -= cut
        excess -= cut
    return budgets


def _split_by_variance(budget: int, arms, ests) -> list:
    """One pull per arm, the rest proportional to empirical variance (largest remainder)."""
    size = len(arms)
    extra = budget - size
    known = [e.variance for e in ests if e.count >= 2]
    if not known or extra == 0:
        weights = np.ones(size)
    else:
        fill = float(np.mean(known))
        weights = np.array([e.variance if e.count >= 2 else fill for e in ests])
        if weights.sum() <= 0:
            weights = np.ones(size)
    share = weights / weights.sum() * extra
    alloc = np.floor(share).astype(int)
    leftover = extra - alloc.sum()
    order = np.lexsort((np.arange(size), -(share - alloc)))
    alloc[order[:leftover]] += 1
    return (alloc + 1).tolist()


def variance_based_rejects(n: int, source, gamma: float = DEFAULT_GAMMA, rng=None) -> RunResult:
    """Reject one arm per stage by lowest ``mu_hat + gamma * sigma_hat / sqrt(T)``.

    Statistics accumulate over all stages; within a stage the budget is split
    in proportion to the current variance estimates.
    """
    k = source.n_arms
    budgets = vbr_stage_budgets(n, k)
    stream = RewardStream(source, as_rng(rng))
    ests = {i: ArmEstimator() for i in range(k)}
    surviving = list(range(k))
    records = []
    for budget in budgets:
        alloc = _split_by_variance(budget, surviving, [ests[i] for i in surviving])
        arms = np.repeat(surviving, alloc)
        rewards = stream.pull_many(arms)
        for i, c in zip(surviving, alloc):
            ests[i] = ests[i].merge(ArmEstimator.from_values(rewards[arms == i]))
        records.append(_record(surviving, alloc, [ests[i] for i in surviving]))
        upper = {}
        for i in surviving:
            e = ests[i]
            sd = math.sqrt(e.variance) if e.count >= 2 else 0.0
            upper[i] = e.mean + gamma * sd / math.sqrt(e.count)
        worst = max(surviving, key=lambda i: (-upper[i], i))
        surviving.remove(worst)
    return RunResult(surviving[0], tuple(records), sum(budgets), "vbr")


vbr_run = variance_based_rejects


ALGORITHMS = ("unif", "sh", "shvar", "shadavar", "gape", "gapev", "vbr")


def run_algorithm(name: str, n: int, source, rng=None, params: AlgorithmParams = AlgorithmParams(), instance=None) -> RunResult:
    """Run a registered algorithm by name.

    ``instance`` is the true instance used for oracle inputs (known variances
    for ``shvar``; ``H`` and ``b`` for the GapE family). It defaults to the
    source's own instance.
    """
    if name not in ALGORITHMS:
        raise KeyError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    rng = as_rng(rng)
    if name == "unif":
        return uniform_allocation(n, source, rng)
    if name == "vbr":
        return variance_based_rejects(n, source, params.gamma, rng)
    if instance is None:
        instance = source.effective_instance()
    if name in ("gape", "gapev"):
        return gap_exploration(n, source, baseline_config(instance, n, name, params), rng, name)
    rule = make_rule(name, instance.variances, params.delta)
    return sequential_halving(n, rule, source, rng)


def min_budget(name: str, k: int, params: AlgorithmParams = AlgorithmParams()) -> int:
    """Smallest budget the algorithm accepts for ``k`` arms."""
    if name == "unif":
        return k
    if name in ("sh", "shvar", "shadavar"):
        return log2_ceil(k) * k
    if name == "gape":
        return k
    if name == "gapev":
        return 2 * k
    if name == "vbr":
        return k * (k + 1) // 2
    raise KeyError(name)
