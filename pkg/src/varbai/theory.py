"""Closed-form error bounds, complexity measures and pull-count floors.

``log K`` in the ``n - K log K`` budget correction is the natural logarithm;
``log2 K`` is base 2. Bounds are never clamped: a value of 1 or more is
returned as is and marked vacuous in :class:`TheoryReport`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import BanditInstance, gaps
from .rules import DEFAULT_DELTA


def h2(instance_or_means) -> float:
    """Complexity ``max_{i >= 2} i / Delta_(i)^2`` over arms ranked by mean."""
    means = instance_or_means.means if isinstance(instance_or_means, BanditInstance) else instance_or_means
    g = np.sort(gaps(means))
    ranks = np.arange(1, g.size + 1)
    return float(np.max(ranks[1:] / g[1:] ** 2))


def _scaled_exp(prefactor: float, exponent: float) -> float:
    if -exponent > 700:
        return math.inf
    return prefactor * math.exp(-exponent)


def sh_bound(n: float, k: int, H2: float) -> float:
    """Mistake bound of round-robin sequential halving."""
    L = math.log2(k)
    return 3 * L * math.exp(-n / (8 * H2 * L))


def shvar_bound(n: float, instance: BanditInstance) -> float:
    """Mistake bound of the known-variance rule via its exact allocation."""
    k = instance.n_arms
    L = math.log2(k)
    return 2 * L * math.exp(-n * instance.delta_min**2 / (4 * L * float(instance.variances.sum())))


def _shvar2_exponent(n: float, k: int, delta_min: float, sigma_max_sq: float) -> float:
    L = math.log2(k)
    return (n - k * math.log(k)) * delta_min**2 / (4 * sigma_max_sq * k * L)


def shvar2_bound(n: float, instance: BanditInstance) -> float:
    """Mistake bound of the known-variance rule via its pull-count floor.

    Vacuous (at least ``2 log2 K``) when ``n <= K log K``.
    """
    k = instance.n_arms
    e = _shvar2_exponent(n, k, instance.delta_min, instance.sigma_max_sq)
    return _scaled_exp(2 * math.log2(k), e)


def alpha_factor(log_term: float, per_arm: float) -> float:
    """``(1 - 2 r) / (1 + 2 r + 2 r^2)`` with ``r = sqrt(log_term / per_arm)``."""
    if per_arm <= 0:
        return -math.inf
    x = log_term / per_arm
    r = math.sqrt(x)
    return (1 - 2 * r) / (1 + 2 * r + 2 * x)


def shadavar_alpha(n: float, k: int, delta: float) -> float:
    """Variance-learning penalty factor, with ``log(K n / delta)`` and ``n / K - 2``."""
    return alpha_factor(math.log(k * n / delta), n / k - 2)


def shadavar_budget_ok(n: float, k: int, delta: float) -> bool:
    return n >= k * math.log2(k) * (4 * math.log(k * n / delta) + 1)


def shadavar_bound(n: float, instance: BanditInstance, delta: float) -> tuple:
    """Mistake bound of the adaptive rule.

    Returns:
        ``(value, conditions_met)`` where ``conditions_met`` says whether both
        ``delta < 1 / (K n)`` and the minimum-budget condition hold.
    """
    k = instance.n_arms
    alpha = shadavar_alpha(n, k, delta)
    ok = delta < 1 / (k * n) and shadavar_budget_ok(n, k, delta)
    if math.isinf(alpha):
        return math.inf, ok
    e = alpha * _shvar2_exponent(n, k, instance.delta_min, instance.sigma_max_sq)
    return _scaled_exp(2 * math.log2(k), e), ok


def pull_lower_bound(k: int, n_s: int, sigma_i_sq: float, sigma_max_sq: float, mode: str = "known", delta: float = DEFAULT_DELTA) -> float:
    """Guaranteed pulls of an arm in a stage of ``k`` arms and ``n_s`` pulls.

    ``mode="known"`` is the deterministic floor of the known-variance rule;
    ``mode="adaptive"`` multiplies it by ``alpha(k, n_s, delta)`` and holds
    with high probability for the adaptive rule.
    """
    if n_s < k:
        raise ValueError("n_s must be at least k")
    base = sigma_i_sq / sigma_max_sq * (n_s / k - 1)
    if mode == "known":
        return base
    if mode == "adaptive":
        return base * alpha_factor(math.log(1 / delta), n_s / k - 2)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class TheoryReport:
    n: int
    K: int
    H2: float
    delta_min: float
    sigma_max_sq: float
    sum_var: float
    alpha: float
    budget_condition_met: bool
    bounds: dict = field(default_factory=dict)
    vacuous: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        rows = [
            ("n", self.n),
            ("K", self.K),
            ("H2", self.H2),
            ("delta_min", self.delta_min),
            ("sigma_max_sq", self.sigma_max_sq),
            ("sum_var", self.sum_var),
            ("alpha", self.alpha),
            ("budget_condition_met", self.budget_condition_met),
        ]
        rows += [(f"bound[{k}]", f"{v:.10g}" + ("  (vacuous)" if self.vacuous[k] else "")) for k, v in self.bounds.items()]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {_fmt(value)}" for name, value in rows)


def _fmt(value) -> str:
    return f"{value:.10g}" if isinstance(value, float) else str(value)


def theory_report(instance: BanditInstance, n: int, delta: float | None = None) -> TheoryReport:
    """Evaluate every bound for one instance and budget.

    ``delta`` for the adaptive bound defaults to ``1 / (2 K n)``, which meets
    its ``delta < 1 / (K n)`` requirement.
    """
    k = instance.n_arms
    if delta is None:
        delta = 1 / (2 * k * n)
    H2 = h2(instance)
    ada, ok = shadavar_bound(n, instance, delta)
    alpha = shadavar_alpha(n, k, delta)
    bounds = {
        "sh": sh_bound(n, k, H2),
        "shvar": shvar_bound(n, instance),
        "shvar2": shvar2_bound(n, instance),
        "shadavar": ada,
    }
    vacuous = {name: value >= 1 for name, value in bounds.items()}
    vacuous["shvar2"] |= n <= k * math.log(k)
    vacuous["shadavar"] |= alpha <= 0
    return TheoryReport(
        n=n,
        K=k,
        H2=H2,
        delta_min=instance.delta_min,
        sigma_max_sq=instance.sigma_max_sq,
        sum_var=float(instance.variances.sum()),
        alpha=alpha,
        budget_condition_met=ok,
        bounds=bounds,
        vacuous=vacuous,
    )
