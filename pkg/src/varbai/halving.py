"""Sequential halving meta-algorithm.

The engine runs ``ceil(log2 K)`` stages with ``floor(n / m)`` pulls each,
delegating the choice of arm in every round to a pull rule, and keeps the
better half of the surviving arms (rounded up) by stage-only empirical means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, TextIO

import numpy as np

from .core import ArmEstimator, BudgetError, PullRecord, RewardSource, RewardStream, as_rng, log2_ceil


@dataclass
class StageState:
    """Mutable state of one stage; rules read it, the engine owns it."""

    stage: int
    surviving: list
    budget: int
    estimators: dict
    round: int = 1
    warnings: list = field(default_factory=list)

    @classmethod
    def fresh(cls, stage: int, surviving, budget: int) -> StageState:
        surviving = list(surviving)
        return cls(stage, surviving, budget, {i: ArmEstimator() for i in surviving})

    def counts(self) -> list:
        return [self.estimators[i].count for i in self.surviving]


@dataclass(frozen=True)
class StageRecord:
    surviving: tuple
    counts: tuple
    means: tuple

    def to_dict(self) -> dict:
        return {"surviving": list(self.surviving), "counts": list(self.counts), "means": list(self.means)}


@dataclass(frozen=True)
class RunResult:
    """Outcome of one run: the identified arm and the per-stage trace."""

    identified: int
    stages: tuple
    total_pulls: int
    algorithm: str = ""
    warnings: tuple = ()

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "identified": self.identified,
            "total_pulls": self.total_pulls,
            "stages": [s.to_dict() for s in self.stages],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def eliminate(means: Mapping[int, float], keep: int, counts: Optional[Mapping[int, int]] = None) -> list:
    """Arms with the ``keep`` highest means, best first; ties go to the lower index.

    ``counts`` (pulls per arm) is optional; an arm with no pulls has no mean and
    is reported as an error.
    """
    if not 1 <= keep <= len(means):
        raise ValueError(f"cannot keep {keep} of {len(means)} arms")
    for arm, mu in means.items():
        if (counts is not None and counts[arm] == 0) or mu is None or np.isnan(mu):
            raise RuntimeError(f"arm {arm} has no pulls in this stage; its mean is undefined")
    ranked = sorted(means, key=lambda arm: (-means[arm], arm))
    return ranked[:keep]


def n_stages(k: int) -> int:
    return log2_ceil(k)


def sequential_halving(n: int, rule, source: RewardSource, rng=None, trace: Optional[TextIO] = None) -> RunResult:
    """Run sequential halving with the given pull rule.

    Args:
        n: total budget; ``n - m * floor(n / m)`` pulls are left unused.
        rule: a pull rule (see :mod:`varbai.rules`).
        source: reward source.
        rng: ``numpy.random.Generator`` or seed.
        trace: optional text stream receiving one tab-separated
            ``stage round arm reward`` line per pull.

    Raises:
        BudgetError: if some stage has fewer pulls than surviving arms.
    """
    k = source.n_arms
    if k < 2:
        raise ValueError("sequential halving needs at least 2 arms")
    m = n_stages(k)
    n_s = n // m
    if n_s < k:
        raise BudgetError(f"budget {n} gives {n_s} pulls per stage, fewer than the {k} arms (need n >= {m * k})")
    stream = RewardStream(source, as_rng(rng))
    surviving = list(range(k))
    records = []
    warnings = []
    for s in range(1, m + 1):
        state = StageState.fresh(s, surviving, n_s)
        arms, rewards = rule.run_stage(state, stream)
        if trace is not None:
            for t, (a, y) in enumerate(zip(arms, rewards), start=1):
                trace.write(PullRecord(s, t, int(a), float(y)).to_line() + "\n")
        warnings.extend(w for w in state.warnings if w not in warnings)
        means = {i: state.estimators[i].mean for i in surviving}
        counts = {i: state.estimators[i].count for i in surviving}
        if sum(counts.values()) != n_s:
            raise RuntimeError(f"stage {s} used {sum(counts.values())} pulls instead of {n_s}")
        records.append(StageRecord(tuple(surviving), tuple(counts[i] for i in surviving), tuple(means[i] for i in surviving)))
        surviving = sorted(eliminate(means, (len(surviving) + 1) // 2, counts))
    return RunResult(surviving[0], tuple(records), m * n_s, getattr(rule, "name", ""), tuple(warnings))
