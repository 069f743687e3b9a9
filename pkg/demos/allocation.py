"""Where the pulls go.

One run of each halving rule on a K=8 instance whose odd arms are noisy.
Round robin spreads a stage evenly; the known-variance rule gives each arm a
share proportional to its variance; the adaptive rule learns those shares
from the data after a short forced phase.

    python demos/allocation.py
"""

# %%
import numpy as np

from varbai import BanditInstance, GaussianSource, sequential_halving
from varbai.rules import ideal_allocation, make_rule

inst = BanditInstance(
    means=[1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3],
    variances=[0.1, 1.0, 0.1, 1.0, 0.1, 1.0, 0.1, 1.0],
)
n = 3000

# %% the first stage has n // 3 pulls for 8 arms
print("ideal first-stage split:", ideal_allocation(inst.variances, n // 3))

# %% run each rule with the same reward seed
for name in ("sh", "shvar", "shadavar"):
    rule = make_rule(name, inst.variances)
    res = sequential_halving(n, rule, GaussianSource(inst), np.random.default_rng(1))
    print(f"\n{name}: identified arm {res.identified}, {res.total_pulls} pulls")
    for s, stage in enumerate(res.stages):
        counts = dict(zip(stage.surviving, stage.counts))
        print(f"  stage {s}: " + "  ".join(f"{a}:{c}" for a, c in counts.items()))
    for w in res.warnings:
        print("  warning:", w)
