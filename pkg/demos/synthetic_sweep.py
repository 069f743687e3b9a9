"""Mistake probability on the synthetic instances, at desk scale.

Each run draws a fresh perturbed instance (means 1 - sqrt((i-1)/K), odd
arms noisier than even ones), and every algorithm sees the same instances.
A few hundred runs per cell is enough to see SHVar and SHAdaVar sit below SH,
and all three well below uniform allocation.  Raise RUNS for tighter error
bars; the CLI equivalent is

    varbai sweep --algs unif,sh,shvar,shadavar --K 16 --n 400,800,1600 --runs 2000
"""

# %%
from varbai.harness import ExperimentConfig, sweep

RUNS = 500
config = ExperimentConfig(
    algorithms=("unif", "sh", "shvar", "shadavar", "vbr"),
    K_values=(16,),
    n_values=(400, 800, 1600),
    runs=RUNS,
    base_seed=0,
)
config.validate()

# %%
table = sweep(config, on_row=lambda r: print(f"  done {r.algorithm:>8} n={r.n}"))

# %% one line per algorithm, budgets across
print()
print(f"{'alg':>9}" + "".join(f"{n:>16}" for n in config.n_values))
for alg in config.algorithms:
    cells = [r for r in table.rows if r.algorithm == alg]
    print(f"{alg:>9}" + "".join(f"{r.mistake_prob:>9.4f} ±{r.std_err:.4f}" for r in cells))

# %% the same numbers as CSV, ready for a plotting tool
print()
print(table.to_csv(), end="")
