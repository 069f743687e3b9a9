"""Variance-adaptive sequential halving for fixed-budget best-arm identification."""

from .baselines import ALGORITHMS, AlgorithmParams, run_algorithm
from .core import (
    ArmEstimator,
    BanditInstance,
    BudgetError,
    GaussianSource,
    InstanceError,
    TabularSource,
    gaps,
    load_instance,
    sample_reward,
    save_instance,
)
from .halving import RunResult, StageState, eliminate, sequential_halving
from .rules import AdaptiveVariance, KnownVariance, RoundRobin, variance_ucb

__version__ = "0.1.0"
