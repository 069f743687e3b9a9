"""Rating bandits from a completed ratings matrix.

The MovieLens 1M file (ratings.dat, UserID::MovieID::Rating::Timestamp) is
not shipped here.  Pass its path as the first argument to use it; without
one, a synthetic file in the same format is written to a temporary directory
so the pipeline still runs end to end.

    python demos/movielens_pipeline.py [path/to/ratings.dat]

Steps: parse, subsample to the most active users and most rated movies,
complete by rank-5 alternating least squares, then sample K=8 movies per run
so that the movie means and variances resemble the synthetic targets.
"""

# %%
import sys
import tempfile
from pathlib import Path

import numpy as np

from varbai.harness import RatingsProblem, run_cell
from varbai.instances import complete_matrix, ingest_ratings, movielens_instance, subsample_ratings, write_synthetic_ratings

workdir = Path(tempfile.mkdtemp())
if len(sys.argv) > 1:
    raw = Path(sys.argv[1])
else:
    raw = workdir / "ratings.dat"
    write_synthetic_ratings(raw, 700, 400, density=0.08, rng=0)

# %%
ratings = ingest_ratings(raw)
print(f"{len(ratings)} ratings, {ratings.n_users} users, {ratings.n_movies} movies")
ratings = subsample_ratings(ratings, max_users=500, max_movies=300)
completed = complete_matrix(ratings, rank=5, rng=0)
print(f"completed {completed.matrix.shape}, observed-entry rmse {completed.rmse:.4f}")
print("loss per sweep:", np.round(completed.losses[:5], 1), "...")
path = workdir / "completed.npz"
completed.save(path)

# %% one sampled rating bandit
inst, _, cols = movielens_instance(completed, 8, np.random.default_rng(0))
print("movies:", list(cols))
print("means:    ", np.round(inst.means, 3))
print("variances:", np.round(inst.variances, 3))

# %% mistake rates over fresh samples; the matched movies are far apart, so
# only budgets near the K * stages minimum give visible error rates
problem = RatingsProblem(str(path))
for n in (24, 40):
    row = ", ".join(
        f"{alg}={run_cell(alg, problem, 8, n, 500, base_seed=0).row.mistake_prob:.3f}"
        for alg in ("unif", "sh", "shvar", "shadavar")
    )
    print(f"n={n}: {row}")
