"""Problem instances, reward sources and streaming estimators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class InstanceError(ValueError):
    """Raised for malformed bandit instances."""


class BudgetError(ValueError):
    """Raised when a budget is too small for the requested algorithm."""


@dataclass(frozen=True)
class BanditInstance:
    """Arm means and reward variances.

    Arms are 0-indexed and need not be sorted; the best arm is computed.
    """

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        variances = np.array(self.variances, dtype=float)
        if means.ndim != 1 or variances.ndim != 1:
            raise InstanceError("means and variances must be flat sequences")
        if means.shape != variances.shape:
            raise InstanceError(
                f"means ({means.size}) and variances ({variances.size}) differ in length"
            )
        if means.size < 2:
            raise InstanceError("a bandit needs at least 2 arms")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(variances)):
            raise InstanceError("means and variances must be finite")
        if np.any(variances <= 0):
            raise InstanceError("every variance must be strictly positive")
        if np.count_nonzero(means == means.max()) != 1:
            raise InstanceError("the maximum mean must be attained by exactly one arm")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_arms(self) -> int:
        return self.means.size

    @property
    def best_arm(self) -> int:
        return int(np.argmax(self.means))

    @property
    def sigma_max_sq(self) -> float:
        return float(self.variances.max())

    @property
    def delta_min(self) -> float:
        return min_gap(self.means)

    def gaps(self) -> np.ndarray:
        return gaps(self)

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "variances": self.variances.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> BanditInstance:
        try:
            return cls(data["means"], data["variances"])
        except KeyError as exc:
            raise InstanceError(f"instance record is missing field {exc}") from None


def gaps(instance_or_means) -> np.ndarray:
    """Suboptimality gaps ``max(mu) - mu_i``; zero for the best arm.

    Accepts a :class:`BanditInstance` or a raw sequence of means. Raw means
    are checked for a unique maximum.
    """
    if isinstance(instance_or_means, BanditInstance):
        means = instance_or_means.means
    else:
        means = np.asarray(instance_or_means, dtype=float)
        if np.count_nonzero(means == means.max()) != 1:
            raise InstanceError("the maximum mean must be attained by exactly one arm")
    return means.max() - means


def min_gap(means) -> float:
    """Smallest positive gap (best mean minus the runner-up)."""
    g = gaps(means)
    return float(g[g > 0].min())


# Instance files are JSON objects; Python's float repr round-trips exactly.
def save_instance(instance: BanditInstance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict(), indent=2) + "\n")


def load_instance(path) -> BanditInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not a valid instance file ({exc})") from None
    return BanditInstance.from_dict(data)


@dataclass(frozen=True)
class GaussianSource:
    """Rewards ``N(mu_i, sigma_i^2)``."""

    instance: BanditInstance

    def __post_init__(self):
        object.__setattr__(self, "_sd", np.sqrt(self.instance.variances))
        object.__setattr__(self, "_mu_list", self.instance.means.tolist())
        object.__setattr__(self, "_sd_list", self._sd.tolist())

    @property
    def n_arms(self) -> int:
        return self.instance.n_arms

    def effective_instance(self) -> BanditInstance:
        return self.instance

    def rewards(self, arms: np.ndarray, noise: np.ndarray) -> np.ndarray:
        return self.instance.means[arms] + self._sd[arms] * noise

    def reward(self, arm: int, noise: float) -> float:
        return self._mu_list[arm] + self._sd_list[arm] * noise

    def draw_noise(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.standard_normal(size)


@dataclass(frozen=True)
class TabularSource:
    """Rewards drawn uniformly at random from a fixed pool per arm."""

    pools: tuple

    def __post_init__(self):
        pools = tuple(np.array(p, dtype=float).ravel() for p in self.pools)
        if len(pools) < 2:
            raise InstanceError("a bandit needs at least 2 arms")
        for i, p in enumerate(pools):
            if p.size == 0:
                raise InstanceError(f"reward pool of arm {i} is empty")
            p.setflags(write=False)
        object.__setattr__(self, "pools", pools)
        sizes = np.array([p.size for p in pools])
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        object.__setattr__(self, "_flat", np.concatenate(pools))
        object.__setattr__(self, "_sizes", sizes)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_arms(self) -> int:
        return len(self.pools)

    def effective_instance(self) -> BanditInstance:
        """Pool means and population variances (the law of one uniform draw)."""
        return BanditInstance(
            [p.mean() for p in self.pools], [p.var() for p in self.pools]
        )

    def rewards(self, arms: np.ndarray, noise: np.ndarray) -> np.ndarray:
        sizes = self._sizes[arms]
        idx = np.minimum((noise * sizes).astype(np.int64), sizes - 1)
        return self._flat[self._offsets[arms] + idx]

    def reward(self, arm: int, noise: float) -> float:
        pool = self.pools[arm]
        return float(pool[min(int(noise * pool.size), pool.size - 1)])

    def draw_noise(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.random(size)


RewardSource = Union[GaussianSource, TabularSource]


def _check_arm(source: RewardSource, arm: int) -> None:
    if not 0 <= arm < source.n_arms:
        raise IndexError(f"arm {arm} out of range for a {source.n_arms}-armed source")


def sample_reward(source: RewardSource, arm: int, rng: np.random.Generator) -> float:
    """Draw a single reward of ``arm``."""
    _check_arm(source, arm)
    return float(source.rewards(np.array([arm]), source.draw_noise(rng, 1))[0])


class RewardStream:
    """Buffered reward draws for one run.

    Noise is drawn in blocks and consumed in pull order, so pulling arms one at
    a time or as a batch yields the same rewards for the same seed.
    """

    def __init__(self, source: RewardSource, rng: np.random.Generator, block: int = 4096):
        self.source = source
        self.rng = rng
        self.block = block
        self._buf = np.empty(0)
        self._list = None
        self._pos = 0
        self.pulls = 0

    def _refill(self, need: int) -> None:
        fresh = self.source.draw_noise(self.rng, max(self.block, need))
        self._buf = np.concatenate([self._buf[self._pos:], fresh])
        self._list = None
        self._pos = 0

    def _take(self, size: int) -> np.ndarray:
        avail = self._buf.size - self._pos
        if size > avail:
            self._refill(size - avail)
        out = self._buf[self._pos:self._pos + size]
        self._pos += size
        self.pulls += size
        return out

    def pull(self, arm: int) -> float:
        if self._pos >= self._buf.size:
            self._refill(1)
        if self._list is None:
            self._list = self._buf.tolist()
        z = self._list[self._pos]
        self._pos += 1
        self.pulls += 1
        return self.source.reward(arm, z)

    def pull_many(self, arms) -> np.ndarray:
        arms = np.asarray(arms, dtype=np.int64)
        return self.source.rewards(arms, self._take(arms.size))


@dataclass
class ArmEstimator:
    """Running mean and sum of squared deviations (Welford)."""

    count: int = 0
    mean: float = 0.0
    sum_sq_dev: float = 0.0

    def update(self, y: float) -> ArmEstimator:
        self.count += 1
        d = y - self.mean
        self.mean += d / self.count
        self.sum_sq_dev += d * (y - self.mean)
        return self

    @property
    def variance(self) -> float:
        """Unbiased sample variance; needs at least two observations."""
        if self.count < 2:
            raise ValueError("variance needs at least 2 observations")
        return self.sum_sq_dev / (self.count - 1)

    def merge(self, other: ArmEstimator) -> ArmEstimator:
        """Estimator of the concatenated sample (Chan et al. pairwise update)."""
        n = self.count + other.count
        if n == 0:
            return ArmEstimator()
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        ssd = self.sum_sq_dev + other.sum_sq_dev + d * d * self.count * other.count / n
        return ArmEstimator(n, mean, ssd)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> ArmEstimator:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(int(values.size), mean, float(np.sum((values - mean) ** 2)))


def estimator_update(est: ArmEstimator, y: float) -> ArmEstimator:
    """Return a new estimator with ``y`` appended; ``est`` is left untouched."""
    return ArmEstimator(est.count, est.mean, est.sum_sq_dev).update(y)


@dataclass(frozen=True)
class PullRecord:
    stage: int
    round: int
    arm: int
    reward: float

    def to_line(self) -> str:
        return f"{self.stage}\t{self.round}\t{self.arm}\t{self.reward!r}"


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def log2_ceil(k: int) -> int:
    """``ceil(log2 k)`` computed exactly on integers."""
    return max(0, (int(k) - 1).bit_length())


__all__ = [
    "ArmEstimator",
    "BanditInstance",
    "BudgetError",
    "GaussianSource",
    "InstanceError",
    "PullRecord",
    "RewardSource",
    "RewardStream",
    "TabularSource",
    "as_rng",
    "estimator_update",
    "gaps",
    "load_instance",
    "log2_ceil",
    "min_gap",
    "sample_reward",
    "save_instance",
]
