"""Empirical Wasserstein-1 distances, Gaussian sampling and tail frequencies.

Three estimators share the :class:`W1Estimate` result type:

* :func:`w1_1d` is exact for one-dimensional empirical measures (sorted
  coupling, or the CDF integral when sample sizes differ);
* :func:`w1_exact_matching` solves the equal-weight assignment problem in any
  dimension for ``n <= 512``;
* :func:`w1_sliced` averages :func:`w1_1d` over random projections and so
  never exceeds the full transport cost.

Two empirical clouds drawn from the same law are still a positive distance
apart; :func:`bias_floor` measures that self-distance so rate fits can
subtract it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from statsmodels.stats.proportion import proportion_confint

from .errors import DimensionMismatch, EmptySample, TooLarge
from .linalg import cholesky

__all__ = [
    "SampleSet",
    "W1Estimate",
    "as_samples",
    "w1_1d",
    "w1_exact_matching",
    "w1_sliced",
    "sample_gaussian",
    "w1_gaussian_1d",
    "directional_tail",
    "bias_floor",
    "MATCHING_MAX_N",
]

MATCHING_MAX_N = 512
BOOTSTRAP_RESAMPLES = 200


@dataclass(frozen=True)
class SampleSet:
    """``n`` points in ``dim`` dimensions, stored as an ``(n, dim)`` array."""

    points: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.ndim != 2:
            raise DimensionMismatch(f"points must be 2-D, got shape {P.shape}")
        if P.shape[0] == 0:
            raise EmptySample("sample set is empty")
        if not np.all(np.isfinite(P)):
            raise ValueError("sample set has non-finite entries")
        object.__setattr__(self, "points", P)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def as_samples(X) -> SampleSet:
    return X if isinstance(X, SampleSet) else SampleSet(X)


@dataclass(frozen=True)
class W1Estimate:
    """An empirical W1 value.

    ``stderr`` is a bootstrap standard error (``nan`` when not computed).
    Sliced estimates are lower-bound-type: they never exceed the full
    empirical transport cost.
    """

    value: float
    method: str
    n: int
    stderr: float = float("nan")
    n_projections: int = 0

    def __float__(self) -> float:
        return self.value


def _w1_sorted(x: np.ndarray, y: np.ndarray) -> float:
    """Exact W1 between 1-D empirical measures given sorted samples."""
    if x.size == y.size:
        return float(np.mean(np.abs(x - y)))
    grid = np.concatenate([x, y])
    grid.sort(kind="mergesort")
    widths = np.diff(grid)
    F = np.searchsorted(x, grid[:-1], side="right") / x.size
    G = np.searchsorted(y, grid[:-1], side="right") / y.size
    return float(np.sum(np.abs(F - G) * widths))


def w1_1d(xs, ys, bootstrap: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> W1Estimate:
    """Exact W1 between two one-dimensional samples.

    Parameters
    ----------
    xs, ys : SampleSet or array_like
        One-dimensional samples, sizes may differ.
    bootstrap : int
        Number of resamples for the standard error (0 skips it).
    seed : int
        Seed of the bootstrap resampler.

    Raises
    ------
    EmptySample
        If either sample is empty.
    DimensionMismatch
        If either sample is not one-dimensional.
    """
    X, Y = as_samples(xs), as_samples(ys)
    if X.dim != 1 or Y.dim != 1:
        raise DimensionMismatch("w1_1d needs one-dimensional samples")
    x = np.sort(X.points[:, 0])
    y = np.sort(Y.points[:, 0])
    value = _w1_sorted(x, y)
    se = float("nan")
    if bootstrap > 0:
        gen = np.random.default_rng(seed)
        reps = np.empty(bootstrap)
        for b in range(bootstrap):
            xb = np.sort(x[gen.integers(0, x.size, x.size)])
            yb = np.sort(y[gen.integers(0, y.size, y.size)])
            reps[b] = _w1_sorted(xb, yb)
        se = float(reps.std(ddof=1)) if bootstrap > 1 else 0.0
    return W1Estimate(value, "exact_1d", int(max(x.size, y.size)), se)


def w1_exact_matching(X, Y) -> W1Estimate:
    """Exact W1 between two equal-size point clouds via optimal assignment.

    Raises
    ------
    TooLarge
        If ``n > 512``.
    DimensionMismatch
        If the sizes or dimensions differ.
    """
    X, Y = as_samples(X), as_samples(Y)
    if X.dim != Y.dim:
        raise DimensionMismatch(f"dimensions differ: {X.dim} vs {Y.dim}")
    if X.n != Y.n:
        raise DimensionMismatch(f"exact matching needs equal sizes, got {X.n} and {Y.n}")
    if X.n > MATCHING_MAX_N:
        raise TooLarge(f"n = {X.n} exceeds {MATCHING_MAX_N}")
    C = cdist(X.points, Y.points)
    rows, cols = linear_sum_assignment(C)
    return W1Estimate(float(C[rows, cols].sum() / X.n), "exact_matching", X.n)


def _unit_directions(dim: int, n: int, gen: np.random.Generator) -> np.ndarray:
    Z = gen.standard_normal((n, dim))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def w1_sliced(X, Y, n_projections: int = 256, rng=None) -> W1Estimate:
    """Mean of :func:`w1_1d` over uniformly random unit directions.

    In one dimension every direction is ``+-1`` and the result equals
    :func:`w1_1d`.
    """
    X, Y = as_samples(X), as_samples(Y)
    if X.dim != Y.dim:
        raise DimensionMismatch(f"dimensions differ: {X.dim} vs {Y.dim}")
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    if X.dim == 1:
        est = w1_1d(X, Y, bootstrap=0)
        return W1Estimate(est.value, "sliced", est.n, float("nan"), n_projections)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    dirs = _unit_directions(X.dim, n_projections, gen)
    px = np.sort(X.points @ dirs.T, axis=0)
    py = np.sort(Y.points @ dirs.T, axis=0)
    vals = np.array([_w1_sorted(px[:, j], py[:, j]) for j in range(n_projections)])
    se = float(vals.std(ddof=1) / math.sqrt(n_projections)) if n_projections > 1 else float("nan")
    return W1Estimate(float(vals.mean()), "sliced", max(X.n, Y.n), se, n_projections)


def _as_generator(rng) -> np.random.Generator:
    if hasattr(rng, "generator"):
        return rng.generator(0)
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_gaussian(Sigma, n: int, rng) -> SampleSet:
    """Draw ``n`` points ``L g`` with ``L`` the lower Cholesky factor of ``Sigma``.

    ``L L^T = Sigma``, so the draws have the law of ``Sigma^{1/2} Z`` even though
    ``L`` is not the symmetric square root.

    Parameters
    ----------
    rng : numpy Generator, RandomStream or int seed

    Raises
    ------
    NotPd
        If ``Sigma`` is not positive definite.
    """
    L = cholesky(Sigma)
    g = _as_generator(rng).standard_normal((int(n), L.shape[0]))
    return SampleSet(g @ L.T)


def w1_gaussian_1d(sigma1: float, sigma2: float) -> float:
    """Exact W1 between ``N(0, sigma1^2)`` and ``N(0, sigma2^2)``: ``|s1 - s2| sqrt(2/pi)``."""
    return abs(sigma1 - sigma2) * math.sqrt(2.0 / math.pi)


def directional_tail(X, zeta, a: float):
    """Empirical ``P(<x, zeta> > a)`` with a 95% Wilson interval.

    Returns
    -------
    (p_hat, ci_lo, ci_hi)
    """
    X = as_samples(X)
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    if zeta.size != X.dim:
        raise DimensionMismatch(f"zeta has length {zeta.size}, samples have dim {X.dim}")
    if abs(np.linalg.norm(zeta) - 1.0) > 1e-9:
        raise ValueError("zeta must be a unit vector")
    hits = int(np.count_nonzero(X.points @ zeta > a))
    lo, hi = proportion_confint(hits, X.n, alpha=0.05, method="wilson")
    return hits / X.n, float(lo), float(hi)


def bias_floor(Sigma, n: int, rng, method: str = "exact_1d", n_projections: int = 256) -> float:
    """Self-distance between two independent ``n``-point clouds of ``N(0, Sigma)``."""
    rng = _as_generator(rng)
    A = sample_gaussian(Sigma, n, rng)
    B = sample_gaussian(Sigma, n, rng)
    if method == "exact_1d":
        return w1_1d(A, B, bootstrap=0).value
    if method == "exact_matching":
        return w1_exact_matching(A, B).value
    return w1_sliced(A, B, n_projections, rng).value
