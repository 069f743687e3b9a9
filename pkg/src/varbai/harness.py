"""Seeded Monte Carlo driver for mistake-probability sweeps.

Seeding protocol. Run ``r`` of a cell with ``K`` arms draws its instance from
``SeedSequence([base_seed, K, r, 0])``, so every algorithm and every budget
sees the same instance for the same run index. Rewards come from
``SeedSequence([base_seed, K, n, r, 1, crc32(algorithm)])``, an independent
stream per algorithm. Results are therefore a pure function of the config and
do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .baselines import ALGORITHMS, AlgorithmParams, min_budget, run_algorithm
from .core import BanditInstance, GaussianSource
from .instances import TARGET_SCALES, CompletedRatings, SyntheticSpec, movielens_instance, synthetic_instance

logger = logging.getLogger(__name__)

CSV_HEADER = ("algorithm", "K", "n", "runs", "mistakes", "mistake_prob", "std_err", "mean_runtime_ms")


@dataclass(frozen=True)
class SyntheticProblem:
    """Perturbed Gaussian bandits, a fresh draw per run."""

    perturb_mean_sd: float = 0.05
    perturb_var_low: float = 0.5
    perturb_var_high: float = 1.5

    def spec(self, K: int) -> SyntheticSpec:
        return SyntheticSpec(K, self.perturb_mean_sd, self.perturb_var_low, self.perturb_var_high)

    def draw(self, K: int, rng) -> tuple:
        instance = synthetic_instance(self.spec(K), rng)
        return instance, GaussianSource(instance)


@lru_cache(maxsize=4)
def _load_completed(path: str) -> CompletedRatings:
    return CompletedRatings.load(path)


@dataclass(frozen=True)
class RatingsProblem:
    """Rating bandits matched from a completed-ratings file, a fresh draw per run."""

    path: str
    perturb_mean_sd: float = 0.05
    perturb_var_low: float = 0.5
    perturb_var_high: float = 1.5
    target_scale: str = "catalogue"

    def draw(self, K: int, rng) -> tuple:
        spec = SyntheticSpec(K, self.perturb_mean_sd, self.perturb_var_low, self.perturb_var_high)
        instance, source, _ = movielens_instance(_load_completed(self.path), K, rng, spec, target_scale=self.target_scale)
        return instance, source


@dataclass(frozen=True)
class FixedProblem:
    """The same Gaussian instance in every run; ``K`` must match."""

    instance: BanditInstance

    def draw(self, K: int, rng) -> tuple:
        if K != self.instance.n_arms:
            raise ValueError(f"fixed instance has {self.instance.n_arms} arms, not {K}")
        return self.instance, GaussianSource(self.instance)


def instance_rng(base_seed: int, K: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, K, run, 0]))


def reward_rng(base_seed: int, K: int, n: int, run: int, algorithm: str) -> np.random.Generator:
    tag = zlib.crc32(algorithm.encode())
    return np.random.default_rng(np.random.SeedSequence([base_seed, K, n, run, 1, tag]))


def instance_hash(instance: BanditInstance) -> str:
    h = hashlib.sha256(instance.means.tobytes() + instance.variances.tobytes())
    return h.hexdigest()[:16]


def binomial_std_err(mistakes: int, runs: int) -> float:
    p = mistakes / runs
    return math.sqrt(p * (1 - p) / runs)


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    K: int
    n: int
    runs: int
    mistakes: int
    mistake_prob: float
    std_err: float
    mean_runtime_ms: Optional[float] = None

    def csv_fields(self) -> list:
        runtime = "" if self.mean_runtime_ms is None else f"{self.mean_runtime_ms:.10g}"
        return [
            self.algorithm,
            str(self.K),
            str(self.n),
            str(self.runs),
            str(self.mistakes),
            f"{self.mistake_prob:.10g}",
            f"{self.std_err:.10g}",
            runtime,
        ]


@dataclass(frozen=True)
class RunRecord:
    """Per-run detail kept on request for audits."""

    run: int
    instance: BanditInstance
    result: object

    @property
    def mistake(self) -> bool:
        return self.result.identified != self.instance.best_arm


@dataclass
class CellResult:
    row: SweepRow
    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _run_chunk(algorithm, problem, K, n, runs, base_seed, params, keep, timing):
    mistakes = 0
    elapsed = 0.0
    records = []
    warnings = set()
    for r in runs:
        instance, source = problem.draw(K, instance_rng(base_seed, K, r))
        rng = reward_rng(base_seed, K, n, r, algorithm)
        t0 = time.perf_counter() if timing else 0.0
        try:
            result = run_algorithm(algorithm, n, source, rng, params, instance)
        except Exception as exc:
            raise RuntimeError(f"{algorithm} failed on run {r} (K={K}, n={n}): {exc}") from exc
        if timing:
            elapsed += time.perf_counter() - t0
        mistakes += result.identified != instance.best_arm
        warnings.update(result.warnings)
        if keep:
            records.append(RunRecord(r, instance, result))
    return mistakes, elapsed, records, warnings


def run_cell(
    algorithm: str,
    problem,
    K: int,
    n: int,
    runs: int,
    base_seed: int = 0,
    params: AlgorithmParams = AlgorithmParams(),
    threads: int = 1,
    keep_runs: bool = False,
    timing: bool = False,
) -> CellResult:
    """Estimate one algorithm's mistake probability at one ``(K, n)``.

    ``timing`` records mean wall-clock time per run; it is off by default
    because it makes output non-reproducible.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    indices = list(range(runs))
    if threads <= 1 or runs < 2 * threads:
        parts = [_run_chunk(algorithm, problem, K, n, indices, base_seed, params, keep_runs, timing)]
    else:
        chunks = [indices[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(threads) as pool:
            futures = [
                pool.submit(_run_chunk, algorithm, problem, K, n, c, base_seed, params, keep_runs, timing)
                for c in chunks
            ]
            parts = [f.result() for f in futures]
    mistakes = sum(p[0] for p in parts)
    records = sorted((rec for p in parts for rec in p[2]), key=lambda rec: rec.run)
    runtime = sum(p[1] for p in parts) / runs * 1000 if timing else None
    row = SweepRow(algorithm, K, n, runs, mistakes, mistakes / runs, binomial_std_err(mistakes, runs), runtime)
    warnings = sorted(set().union(*(p[3] for p in parts)))
    return CellResult(row, records, warnings)


@dataclass(frozen=True)
class ExperimentConfig:
    algorithms: tuple
    K_values: tuple
    n_values: tuple
    runs: int = 5000
    base_seed: int = 0
    ratings_path: Optional[str] = None
    target_scale: str = "catalogue"
    fixed_instance: bool = False
    delta: float = 0.05
    gamma: float = 1.96
    c_gape: float = 1 / 144
    c_gapev: float = 1 / 512
    perturb_mean_sd: float = 0.05
    perturb_var_low: float = 0.5
    perturb_var_high: float = 1.5
    threads: int = 1
    timing: bool = False

    def validate(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not self.algorithms or not self.K_values or not self.n_values:
            raise ValueError("algorithms, K values and n values must be non-empty")
        if self.base_seed < 0:
            raise ValueError("seed must be non-negative")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
        if self.target_scale not in TARGET_SCALES:
            raise ValueError(f"target_scale must be one of {TARGET_SCALES}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        params = self.params()
        for name in self.algorithms:
            for K in self.K_values:
                if K < 2:
                    raise ValueError("K must be at least 2")
                for n in self.n_values:
                    need = min_budget(name, K, params)
                    if n < need:
                        raise ValueError(f"{name} with K={K} needs n >= {need}, got {n}")

    def params(self) -> AlgorithmParams:
        return AlgorithmParams(self.delta, self.gamma, self.c_gape, self.c_gapev)

    def problem(self):
        perturb = (self.perturb_mean_sd, self.perturb_var_low, self.perturb_var_high)
        if self.ratings_path:
            return RatingsProblem(self.ratings_path, *perturb, target_scale=self.target_scale)
        return SyntheticProblem(*perturb)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("algorithms", "K_values", "n_values"):
            d[key] = list(d[key])
        d.pop("threads")
        return d


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    def sorted(self) -> SweepTable:
        return SweepTable(sorted(self.rows, key=lambda r: (r.algorithm, r.K, r.n)))

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow(row.csv_fields())
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def lookup(self, algorithm: str, K: int, n: int) -> SweepRow:
        for row in self.rows:
            if (row.algorithm, row.K, row.n) == (algorithm, K, n):
                return row
        raise KeyError((algorithm, K, n))


class _FixedDraw:
    """Pins every run to the instance of run 0 (debugging aid)."""

    def __init__(self, problem, base_seed):
        self.problem = problem
        self.base_seed = base_seed

    def draw(self, K, rng):
        return self.problem.draw(K, instance_rng(self.base_seed, K, 0))


def sweep(config: ExperimentConfig, on_row: Optional[Callable[[SweepRow], None]] = None) -> SweepTable:
    """Every algorithm x K x n cell of the config, sorted by (algorithm, K, n).

    ``on_row`` is called as each cell finishes, so callers can persist partial
    results if a later cell fails.
    """
    config.validate()
    problem = config.problem()
    if config.fixed_instance:
        problem = _FixedDraw(problem, config.base_seed)
    params = config.params()
    rows = []
    for name in config.algorithms:
        for K in config.K_values:
            for n in config.n_values:
                cell = run_cell(name, problem, K, n, config.runs, config.base_seed, params, config.threads, timing=config.timing)
                logger.info("%s K=%d n=%d: p=%.4f (se %.4f)", name, K, n, cell.row.mistake_prob, cell.row.std_err)
                for w in cell.warnings:
                    logger.warning("%s K=%d n=%d: %s", name, K, n, w)
                rows.append(cell.row)
                if on_row is not None:
                    on_row(cell.row)
    return SweepTable(rows).sorted()


def write_provenance(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def pooled_std_err(a: SweepRow, b: SweepRow) -> float:
    return math.sqrt(a.std_err**2 + b.std_err**2)


__all__ = [
    "CSV_HEADER",
    "CellResult",
    "ExperimentConfig",
    "FixedProblem",
    "RatingsProblem",
    "RunRecord",
    "SweepRow",
    "SweepTable",
    "SyntheticProblem",
    "binomial_std_err",
    "instance_hash",
    "instance_rng",
    "pooled_std_err",
    "reward_rng",
    "run_cell",
    "sweep",
    "write_provenance",
]
