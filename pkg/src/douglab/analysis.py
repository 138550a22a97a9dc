"""Measurement pipeline shared by the CLI, the demos and the acceptance tests.

A Monte Carlo batch is reduced to one W1 value per checkpoint (replica cloud
against a fresh Gaussian cloud of the limit law), a bias floor (two Gaussian
clouds of the same law), and finally a log-log rate fit of the excess
``w1 - floor`` against ``k + K``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .bounds import stationary_covariance
from .errors import InsufficientData
from .linalg import as_square
from .schedule import StepSchedule, limit_drift
from .sim import RandomStream, TrajectoryBatch
from .transport import (
    MATCHING_MAX_N,
    sample_gaussian,
    w1_1d,
    w1_exact_matching,
    w1_sliced,
)

__all__ = [
    "RateFit",
    "W1Row",
    "fit_rate",
    "limit_covariance",
    "averaging_covariance",
    "measure_w1",
    "w1_rows",
]

#: stream ids of reference Gaussian clouds sit far above replica ids
_REFERENCE_STREAM = 1 << 40


@dataclass(frozen=True)
class RateFit:
    """OLS fit of ``log(excess)`` against ``log(k + K)`` over a window."""

    slope: float
    intercept: float
    r2: float
    window: Tuple[int, int]
    slope_stderr: float
    ci_lo: float
    ci_hi: float
    n_points: int
    dropped: Tuple[int, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["dropped"] = list(self.dropped)
        return d


def fit_rate(ks: Sequence[float], K: float, values: Sequence[float], floor: Optional[Sequence[float]] = None,
             window: Optional[Tuple[int, int]] = None, min_points: int = 6, x_offset: bool = True) -> RateFit:
    """Fit ``log(values - floor)`` against ``log(k + K)``.

    Parameters
    ----------
    ks : sequence of int
        Checkpoint indices, increasing.
    K : float
        Offset added to ``ks`` before taking logs (ignored if ``x_offset`` is False).
    floor : sequence, optional
        Subtracted from ``values``. Nonpositive differences are dropped and
        listed in ``RateFit.dropped``.
    window : (k_lo, k_hi), optional
        Inclusive range of ``k``. Defaults to the last half of the checkpoints.

    Raises
    ------
    InsufficientData
        If fewer than ``min_points`` usable points remain.
    """
    ks = np.asarray(ks, dtype=float)
    v = np.asarray(values, dtype=float)
    if floor is not None:
        v = v - np.asarray(floor, dtype=float)
    if window is None:
        lo_idx = len(ks) // 2
        window = (int(ks[lo_idx]) if len(ks) else 0, int(ks[-1]) if len(ks) else 0)
    inwin = (ks >= window[0]) & (ks <= window[1])
    usable = inwin & (v > 0) & np.isfinite(v)
    dropped = tuple(int(k) for k in ks[inwin & ~usable])
    if usable.sum() < min_points:
        raise InsufficientData(f"{int(usable.sum())} usable points in window {window}, need {min_points}")
    x = np.log(ks[usable] + (K if x_offset else 0.0))
    y = np.log(v[usable])
    res = stats.linregress(x, y)
    n = int(usable.sum())
    t = stats.t.ppf(0.975, n - 2)
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), (int(window[0]), int(window[1])),
                   float(res.stderr), float(res.slope - t * res.stderr), float(res.slope + t * res.stderr), n, dropped)


def limit_covariance(J, Sigma_b, s: StepSchedule) -> np.ndarray:
    """Covariance of the Gaussian limit of ``y_k`` or ``z_k``: ``Sigma1`` for ``xi < 1``, ``Sigma2`` for ``xi = 1``."""
    return stationary_covariance(limit_drift(s, J), Sigma_b)


def averaging_covariance(Sigma_b, s: StepSchedule) -> np.ndarray:
    """Limit covariance of ``x_k / sqrt(alpha_k)`` for step-size averaging.

    ``Sigma_b / 2`` for ``xi < 1`` and ``alpha Sigma_b / (2 alpha - 1)`` for
    ``xi = 1`` (which is ``Sigma_b`` at ``alpha = 1``, the running mean).
    """
    Sb = as_square(Sigma_b, "Sigma_b")
    if s.xi < 1.0:
        return Sb / 2.0
    if s.alpha <= 0.5:
        raise ValueError("averaging with xi = 1 needs alpha > 1/2 for a Gaussian limit")
    return s.alpha * Sb / (2.0 * s.alpha - 1.0)


@dataclass(frozen=True)
class W1Row:
    k: int
    alpha_k: float
    w1: float
    stderr: float
    bias_floor: float
    method: str


def _cloud(X: np.ndarray, zeta) -> np.ndarray:
    if zeta is None:
        return X
    z = np.asarray(zeta, dtype=float).reshape(-1)
    return (X @ z)[:, None]


def measure_w1(X: np.ndarray, Sigma, seed: int, slot: int, method: Optional[str] = None, n_gauss: Optional[int] = None,
               n_projections: int = 256, bootstrap: int = 200, zeta=None, floor_reps: int = 1) -> W1Row:
    """W1 between replica cloud ``X`` and ``N(0, Sigma)`` with a bias floor.

    ``X`` is compared with a reference Gaussian cloud of size ``n_gauss``
    (default: as many points as ``X``). The bias floor is the same distance
    for a Gaussian cloud of the size of ``X``, averaged over ``floor_reps``
    independent clouds. Reference draws come from ``RandomStream(seed, 2^40 +
    (floor_reps + 1) slot + j)``, so every checkpoint has its own fixed draws.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    S = as_square(Sigma, "Sigma")
    if zeta is not None:
        z = np.asarray(zeta, dtype=float).reshape(-1)
        S = np.array([[float(z @ S @ z)]])
        d = 1
    method = method or ("exact_1d" if d == 1 else "sliced")
    m = X.shape[0]
    n = int(n_gauss or m)
    if method == "exact_matching":
        n = m = min(n, m, MATCHING_MAX_N)
    base = _REFERENCE_STREAM + (floor_reps + 1) * slot
    G = sample_gaussian(S, n, RandomStream(seed, base)).points
    Xc = _cloud(X, zeta)[:m]
    if method == "exact_1d":
        def dist(A, bootstrap=0):
            return w1_1d(A, G, bootstrap=bootstrap, seed=seed + slot)
    elif method == "exact_matching":
        def dist(A, bootstrap=0):
            return w1_exact_matching(A, G)
    elif method == "sliced":
        def dist(A, bootstrap=0):
            return w1_sliced(A, G, n_projections, np.random.default_rng([seed, slot]))
    else:
        raise ValueError(f"unknown W1 method {method!r}")
    est = dist(Xc, bootstrap)
    floor = float(np.mean([dist(sample_gaussian(S, m, RandomStream(seed, base + 1 + j)).points).value
                           for j in range(floor_reps)]))
    return W1Row(0, float("nan"), est.value, est.stderr, floor, method)


def w1_rows(batch: TrajectoryBatch, which: str, Sigma, seed: int, **kw) -> List[W1Row]:
    """One :class:`W1Row` per checkpoint of ``batch`` (field ``which``)."""
    rows = []
    arr = getattr(batch, which)
    for j, k in enumerate(batch.checkpoints.indices):
        r = measure_w1(arr[:, j, :], Sigma, seed, j, **kw)
        rows.append(W1Row(int(k), float(batch.alpha_k[j]), r.w1, r.stderr, r.bias_floor, r.method))
    return rows


def excess(rows: Sequence[W1Row]) -> np.ndarray:
    """``max(w1 - bias_floor, 0)`` per row."""
    return np.maximum(np.array([r.w1 - r.bias_floor for r in rows]), 0.0)
