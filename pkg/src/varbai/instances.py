"""Problem generators: perturbed Gaussian bandits and rating-matrix bandits.

Rating bandits are built from a MovieLens-style ratings file: the sparse
matrix is completed by rank-5 alternating least squares, then each arm is
matched to the movie whose (mean, variance) over users is closest to a
synthetic target. Pulling an arm returns the completed rating of a uniformly
random user.

Completed-ratings files (``.npz``) hold:

    format_version  int, currently 1
    matrix          float64 [users, movies], completed ratings (not clipped)
    user_ids        int64 [users], original user ids
    movie_ids       int64 [movies], original movie ids
    rank, reg       factorization settings
    rmse            training RMSE on observed entries
    losses          regularized loss after each half-sweep pair
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BanditInstance, InstanceError, TabularSource, as_rng

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MIN_VARIANCE = 1e-4


@dataclass(frozen=True)
class SyntheticSpec:
    K: int
    perturb_mean_sd: float = 0.05
    perturb_var_low: float = 0.5
    perturb_var_high: float = 1.5
    even_arm_var_slope: float = 0.9
    even_arm_var_intercept: float = 0.1
    odd_arm_var: float = 0.1

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.perturb_mean_sd < 0 or not 0 <= self.perturb_var_low <= self.perturb_var_high:
            raise ValueError("invalid perturbation settings")

    @classmethod
    def unperturbed(cls, K: int) -> SyntheticSpec:
        return cls(K, perturb_mean_sd=0.0, perturb_var_low=1.0, perturb_var_high=1.0)


def base_means_variances(spec: SyntheticSpec) -> tuple:
    """Unperturbed means ``1 - sqrt((i - 1) / K)`` and parity-dependent variances.

    Arms are numbered from 1 for the parity rule: even arms get
    ``slope * mu^2 + intercept``, odd arms a constant low variance.
    """
    i = np.arange(1, spec.K + 1)
    means = 1 - np.sqrt((i - 1) / spec.K)
    variances = np.where(
        i % 2 == 0,
        spec.even_arm_var_slope * means**2 + spec.even_arm_var_intercept,
        spec.odd_arm_var,
    )
    return means, variances


def synthetic_instance(spec: SyntheticSpec, rng=None, max_attempts: int = 100) -> BanditInstance:
    """Draw a perturbed Gaussian bandit.

    Means get additive ``N(0, sd^2)`` noise and variances multiplicative
    ``Unif(low, high)`` noise, floored at ``MIN_VARIANCE``. Draws without a
    unique best arm are rejected.
    """
    rng = as_rng(rng)
    base_mu, base_var = base_means_variances(spec)
    for _ in range(max_attempts):
        means = base_mu + rng.normal(0.0, spec.perturb_mean_sd, spec.K)
        variances = base_var * rng.uniform(spec.perturb_var_low, spec.perturb_var_high, spec.K)
        variances = np.maximum(variances, MIN_VARIANCE)
        if np.count_nonzero(means == means.max()) == 1:
            return BanditInstance(means, variances)
    raise InstanceError(f"no instance with a unique best arm after {max_attempts} attempts")


@dataclass(frozen=True)
class Ratings:
    """Observed (user, movie, rating) triples with dense 0-based indices."""

    users: np.ndarray
    movies: np.ndarray
    values: np.ndarray
    user_ids: np.ndarray
    movie_ids: np.ndarray

    @property
    def n_users(self) -> int:
        return self.user_ids.size

    @property
    def n_movies(self) -> int:
        return self.movie_ids.size

    def __len__(self):
        return self.values.size


def _dense(raw_users, raw_movies, values) -> Ratings:
    user_ids, users = np.unique(raw_users, return_inverse=True)
    movie_ids, movies = np.unique(raw_movies, return_inverse=True)
    return Ratings(users.astype(np.int64), movies.astype(np.int64), np.asarray(values, dtype=float), user_ids, movie_ids)


def ingest_ratings(path) -> Ratings:
    """Parse an ml-1m ``UserID::MovieID::Rating::Timestamp`` file."""
    raw_users, raw_movies, values = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("::")
            try:
                if len(parts) != 4:
                    raise ValueError(f"expected 4 fields, got {len(parts)}")
                u, m, r = int(parts[0]), int(parts[1]), float(parts[2])
                int(parts[3])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed rating line ({exc})") from None
            raw_users.append(u)
            raw_movies.append(m)
            values.append(r)
    if not values:
        raise ValueError(f"{path}: no ratings found")
    ratings = _dense(raw_users, raw_movies, values)
    logger.info("read %d ratings from %d users on %d movies", len(ratings), ratings.n_users, ratings.n_movies)
    return ratings


def subsample_ratings(ratings: Ratings, max_users: int | None = None, max_movies: int | None = None) -> Ratings:
    """Keep the most-rated movies, then the most active users among them."""
    users, movies, values = ratings.user_ids[ratings.users], ratings.movie_ids[ratings.movies], ratings.values
    if max_movies is not None and max_movies < ratings.n_movies:
        counts = np.bincount(ratings.movies, minlength=ratings.n_movies)
        keep = np.sort(np.argsort(-counts, kind="stable")[:max_movies])
        mask = np.isin(ratings.movies, keep)
        users, movies, values = users[mask], movies[mask], values[mask]
    if max_users is not None:
        uniq, inv = np.unique(users, return_inverse=True)
        if max_users < uniq.size:
            counts = np.bincount(inv)
            keep = np.argsort(-counts, kind="stable")[:max_users]
            mask = np.isin(inv, keep)
            users, movies, values = users[mask], movies[mask], values[mask]
    if values.size == 0:
        raise ValueError("subsampling removed every rating")
    return _dense(users, movies, values)


@dataclass
class CompletedRatings:
    matrix: np.ndarray
    user_ids: np.ndarray
    movie_ids: np.ndarray
    rank: int = 5
    reg: float = 0.1
    rmse: float = float("nan")
    losses: list = field(default_factory=list)

    @property
    def movie_means(self) -> np.ndarray:
        return self.matrix.mean(axis=0)

    @property
    def movie_variances(self) -> np.ndarray:
        return self.matrix.var(axis=0)

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            format_version=FORMAT_VERSION,
            matrix=self.matrix,
            user_ids=self.user_ids,
            movie_ids=self.movie_ids,
            rank=self.rank,
            reg=self.reg,
            rmse=self.rmse,
            losses=np.asarray(self.losses, dtype=float),
        )

    @classmethod
    def load(cls, path) -> CompletedRatings:
        with np.load(path) as data:
            version = int(data["format_version"])
            if version != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported completed-ratings format version {version}")
            return cls(
                data["matrix"],
                data["user_ids"],
                data["movie_ids"],
                int(data["rank"]),
                float(data["reg"]),
                float(data["rmse"]),
                data["losses"].tolist(),
            )


class _SideSolver:
    """Ridge solves for every row of one factor given the other factor."""

    def __init__(self, rows, cols, values, n_rows):
        order = np.argsort(rows, kind="stable")
        self.cols = cols[order]
        self.values = values[order]
        sorted_rows = rows[order]
        self.starts = np.flatnonzero(np.r_[True, sorted_rows[1:] != sorted_rows[:-1]])
        present = sorted_rows[self.starts]
        if present.size != n_rows:
            missing = np.setdiff1d(np.arange(n_rows), present)
            raise ValueError(f"rows without ratings: {missing[:10].tolist()}")

    def solve(self, other: np.ndarray, reg: float) -> np.ndarray:
        r = other.shape[1]
        f = other[self.cols]
        gram = np.add.reduceat(f[:, :, None] * f[:, None, :], self.starts, axis=0)
        rhs = np.add.reduceat(f * self.values[:, None], self.starts, axis=0)
        gram += reg * np.eye(r)
        try:
            return np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            raise RuntimeError("singular normal equations in alternating least squares; increase reg") from None


def _als_loss(ratings: Ratings, U, V, reg) -> tuple:
    resid = ratings.values - np.einsum("ij,ij->i", U[ratings.users], V[ratings.movies])
    sse = float(resid @ resid)
    return sse + reg * (float(np.sum(U**2)) + float(np.sum(V**2))), sse


def factorize(ratings: Ratings, rank: int = 5, reg: float = 0.1, iters: int = 20, rng=None) -> tuple:
    """Alternating ridge regression on observed entries.

    Minimizes ``sum_obs (r - u.v)^2 + reg (|U|^2 + |V|^2)``; each half-step is
    an exact block minimizer, so the loss never increases.

    Returns:
        ``(U, V, losses)`` with the loss at initialization followed by the loss
        after every iteration.
    """
    rng = as_rng(rng)
    U = rng.uniform(-0.01, 0.01, (ratings.n_users, rank))
    V = rng.uniform(-0.01, 0.01, (ratings.n_movies, rank))
    by_user = _SideSolver(ratings.users, ratings.movies, ratings.values, ratings.n_users)
    by_movie = _SideSolver(ratings.movies, ratings.users, ratings.values, ratings.n_movies)
    losses = [_als_loss(ratings, U, V, reg)[0]]
    for it in range(iters):
        U = by_user.solve(V, reg)
        V = by_movie.solve(U, reg)
        losses.append(_als_loss(ratings, U, V, reg)[0])
        logger.debug("als iteration %d: loss %.6g", it + 1, losses[-1])
    return U, V, losses


def complete_matrix(ratings: Ratings, rank: int = 5, reg: float = 0.1, iters: int = 20, rng=None) -> CompletedRatings:
    U, V, losses = factorize(ratings, rank, reg, iters, rng)
    _, sse = _als_loss(ratings, U, V, reg)
    rmse = float(np.sqrt(sse / len(ratings)))
    logger.info("completed %dx%d matrix, observed RMSE %.4f", ratings.n_users, ratings.n_movies, rmse)
    return CompletedRatings(U @ V.T, ratings.user_ids, ratings.movie_ids, rank, reg, rmse, losses)


def match_movies(target_means, target_vars, movie_means, movie_vars) -> list:
    """Greedy nearest distinct movie per target, in target order.

    Distance is ``(mu - mu_target)^2 + (var - var_target)^2``; ties go to the
    lower movie index.
    """
    target_means = np.asarray(target_means, dtype=float)
    target_vars = np.asarray(target_vars, dtype=float)
    movie_means = np.asarray(movie_means, dtype=float)
    movie_vars = np.asarray(movie_vars, dtype=float)
    if target_means.size > movie_means.size:
        raise ValueError(f"cannot match {target_means.size} arms to {movie_means.size} movies")
    used = np.zeros(movie_means.size, dtype=bool)
    chosen = []
    for mu, var in zip(target_means, target_vars):
        dist = (movie_means - mu) ** 2 + (movie_vars - var) ** 2
        dist[used] = np.inf
        j = int(np.argmin(dist))
        used[j] = True
        chosen.append(j)
    return chosen


TARGET_SCALES = ("catalogue", "raw")


def movielens_instance(
    completed: CompletedRatings,
    K: int,
    rng=None,
    spec: SyntheticSpec | None = None,
    max_attempts: int = 100,
    target_scale: str = "catalogue",
) -> tuple:
    """Sample a rating bandit with ``K`` arms.

    Targets come from :func:`synthetic_instance`, whose means lie around
    ``[0, 1]``. With ``target_scale="catalogue"`` the target means are mapped
    affinely onto ``[min, max]`` of the movie means before matching (variances
    are used as drawn); ``"raw"`` matches the unscaled targets, which on a 1-5
    rating scale selects the same lowest-rated movies in every run.

    Returns:
        ``(instance, source, movie_columns)``: the pools' mean/variance instance,
        the tabular reward source over completed rating columns, and the chosen
        column indices.
    """
    if K > completed.matrix.shape[1]:
        raise ValueError(f"K={K} exceeds the {completed.matrix.shape[1]} available movies")
    if target_scale not in TARGET_SCALES:
        raise ValueError(f"target_scale must be one of {TARGET_SCALES}")
    rng = as_rng(rng)
    spec = spec or SyntheticSpec(K)
    movie_means, movie_vars = completed.movie_means, completed.movie_variances
    lo, hi = (float(movie_means.min()), float(movie_means.max())) if target_scale == "catalogue" else (0.0, 1.0)
    for _ in range(max_attempts):
        target = synthetic_instance(spec, rng)
        cols = match_movies(lo + (hi - lo) * target.means, target.variances, movie_means, movie_vars)
        pool_means = movie_means[cols]
        if np.count_nonzero(pool_means == pool_means.max()) == 1 and np.all(movie_vars[cols] > 0):
            source = TabularSource(tuple(completed.matrix[:, j] for j in cols))
            return source.effective_instance(), source, cols
    raise InstanceError(f"no rating bandit with a unique best arm after {max_attempts} attempts")


def write_synthetic_ratings(path, n_users: int, n_movies: int, density: float = 0.1, rank: int = 3, rng=None) -> int:
    """Write a MovieLens-format file of integer 1..5 ratings from a low-rank model.

    Every user and movie gets at least one rating. Returns the number of lines.
    """
    rng = as_rng(rng)
    user_f = rng.normal(0, 1, (n_users, rank))
    movie_f = rng.normal(0, 1, (n_movies, rank)) * rng.uniform(0.1, 0.8, (n_movies, 1))
    movie_bias = rng.normal(3.4, 0.6, n_movies)
    observed = rng.random((n_users, n_movies)) < density
    observed[np.arange(n_users), rng.integers(0, n_movies, n_users)] = True
    observed[rng.integers(0, n_users, n_movies), np.arange(n_movies)] = True
    scores = movie_bias + user_f @ movie_f.T + rng.normal(0, 0.3, (n_users, n_movies))
    ratings = np.clip(np.rint(scores), 1, 5).astype(int)
    uu, mm = np.nonzero(observed)
    with open(Path(path), "w") as fh:
        for t, (u, m) in enumerate(zip(uu, mm)):
            fh.write(f"{u + 1}::{m + 1}::{ratings[u, m]}::{978300000 + t}\n")
    return uu.size
