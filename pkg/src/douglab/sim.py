"""Trajectory engines and Monte Carlo batching.

Four recursions are simulated, all vectorized across replicas:

* SA: ``x_{k+1} = x_k + alpha_k (F(x_k) + A_k + b_k)``, recorded as
  ``y_k = (x_k - x*) / sqrt(alpha_k)``;
* DOUG: ``z_{k+1} = (I + alpha_k J_k) z_k + sqrt(alpha_k) b_k`` with ``z_0 = 0``;
* the coupled triple ``(y_k, zhat_k, z_k)`` driven by one data stream, where
  ``zhat`` also receives the multiplicative noise evaluated at the SA state;
* step-size averaging ``x_{k+1} = (1 - alpha_k) x_k + alpha_k b_k``, recorded as
  ``x_k / sqrt(alpha_k)``.

Randomness is counter-based: replica ``r`` of a run with master seed ``s``
draws from generators seeded by ``SeedSequence(s, spawn_key=(r, j))``, with a
separate sub-stream ``j`` for the additive and the multiplicative innovations.
A replica's output therefore depends only on ``(s, r)``, never on how replicas
are grouped or scheduled across workers.
"""

from __future__ import annotations

import io
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numba
import numpy as np

from .errors import Diverged, TooManyDiverged
from .linalg import as_square
from .model import (
    NoiseModel,
    Problem,
    _rows_times,
    multiplicative_innovations,
    standard_innovations,
)
from .schedule import StepSchedule, drift_shift, step

__all__ = [
    "DIVERGENCE_GUARD",
    "RandomStream",
    "CheckpointPlan",
    "geometric_plan",
    "TrajectoryBatch",
    "run_sa",
    "run_doug",
    "run_coupled",
    "run_averaging",
    "monte_carlo",
]

DIVERGENCE_GUARD = 1e12
_MAX_DIVERGED_FRACTION = 0.01
# Upper bound on buffered innovations per chunk (floats); purely a memory knob.
_CHUNK_BUDGET = 1 << 22


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random stream identified by ``(master_seed, stream_id)``."""

    master_seed: int
    stream_id: int = 0

    def generator(self, sub: int = 0) -> np.random.Generator:
        """Independent generator for sub-stream ``sub`` of this stream."""
        ss = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_id), int(sub)))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RandomStream":
        return RandomStream(self.master_seed, stream_id)


@dataclass(frozen=True)
class CheckpointPlan:
    """Strictly increasing iteration indices at which states are recorded."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("checkpoint plan is empty")
        if idx[0] < 0 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("checkpoint indices must be nonnegative and strictly increasing")
        object.__setattr__(self, "indices", idx)

    @property
    def horizon(self) -> int:
        return self.indices[-1]

    def __len__(self):
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


def geometric_plan(horizon: int, start: int = 1, factor: float = 2.0, include_zero: bool = False) -> CheckpointPlan:
    """Checkpoints ``ceil(start * factor^j)`` below ``horizon``, then ``horizon``."""
    if factor <= 1.0:
        raise ValueError("factor must exceed 1")
    ks = [0] if include_zero else []
    j = 0
    while True:
        k = math.ceil(start * factor ** j - 1e-9)
        if k >= horizon:
            break
        if not ks or k > ks[-1]:
            ks.append(k)
        j += 1
    if not ks or ks[-1] != horizon:
        ks.append(int(horizon))
    return CheckpointPlan(tuple(ks))


@dataclass
class TrajectoryBatch:
    """Samples at checkpoints, shaped ``(replicas, len(checkpoints), dim)``.

    ``zhat`` and ``z`` are present only for coupled runs. ``diverged`` lists
    replica ids removed from the arrays together with their first bad index.
    """

    checkpoints: CheckpointPlan
    y: np.ndarray
    alpha_k: np.ndarray
    zhat: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    replica_ids: Optional[np.ndarray] = None
    diverged: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.y.shape[2]

    def at(self, k: int, which: str = "y") -> np.ndarray:
        """``(replicas, dim)`` samples of ``which`` at checkpoint ``k``."""
        j = self.checkpoints.indices.index(int(k))
        return getattr(self, which)[:, j, :]

    _MAGIC = b"DLTB"

    def to_bytes(self) -> bytes:
        """Flat little-endian layout.

        Header: magic, ``u32`` version, ``u64`` replicas, checkpoints, dim,
        ``u32`` presence flags (bit 0 ``zhat``, bit 1 ``z``), then the ``u64``
        checkpoint indices. Body: ``<f8`` arrays ``y`` (then ``zhat``, ``z``),
        each replica-major.
        """
        flags = (self.zhat is not None) | ((self.z is not None) << 1)
        buf = io.BytesIO()
        buf.write(self._MAGIC)
        buf.write(struct.pack("<IQQQI", 1, self.replicas, len(self.checkpoints), self.dim, flags))
        buf.write(self.checkpoints.as_array().astype("<u8").tobytes())
        for arr in (self.y, self.zhat, self.z):
            if arr is not None:
                buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, schedule: Optional[StepSchedule] = None) -> "TrajectoryBatch":
        if data[:4] != cls._MAGIC:
            raise ValueError("not a trajectory batch")
        _, R, C, d, flags = struct.unpack_from("<IQQQI", data, 4)
        off = 4 + struct.calcsize("<IQQQI")
        ks = np.frombuffer(data, dtype="<u8", count=C, offset=off).astype(np.int64)
        off += 8 * C
        arrays = []
        for present in (True, bool(flags & 1), bool(flags & 2)):
            if present:
                arrays.append(np.frombuffer(data, dtype="<f8", count=R * C * d, offset=off).reshape(R, C, d).copy())
                off += 8 * R * C * d
            else:
                arrays.append(None)
        plan = CheckpointPlan(tuple(ks.tolist()))
        ak = step(schedule, ks) if schedule is not None else np.full(C, np.nan)
        return cls(plan, arrays[0], np.atleast_1d(ak), zhat=arrays[1], z=arrays[2])

    def summary_rows(self, which: str = "y", scale: Optional[np.ndarray] = None):
        """Per-checkpoint ``(k, alpha_k, mean, covariance, mean squared norm)``.

        With ``scale = sqrt(alpha_k)`` the last column becomes the MSE of the
        unscaled iterate.
        """
        arr = getattr(self, which)
        rows = []
        for j, k in enumerate(self.checkpoints.indices):
            X = arr[:, j, :]
            if scale is not None:
                X = X * scale[j]
            cov = np.atleast_2d(np.cov(X, rowvar=False, bias=False)) if X.shape[0] > 1 else np.zeros((self.dim,) * 2)
            rows.append((k, float(self.alpha_k[j]), X.mean(axis=0), cov, float(np.mean(np.sum(X * X, axis=1)))))
        return rows


# --------------------------------------------------------------------------
# engines


@dataclass
class _Setup:
    mode: str
    schedule: StepSchedule
    plan: CheckpointPlan
    dim: int
    J: Optional[np.ndarray] = None
    noise: Optional[NoiseModel] = None
    problem: Optional[Problem] = None
    x0: Optional[np.ndarray] = None


_MODES = {"sa": 0, "coupled": 1, "doug": 2, "averaging": 3}
_RESIDUALS = {"none": 0, "saturating_power": 1, "logcosh_gradient": 2}


@numba.njit(cache=True, nogil=True)
def _advance(mode, U, Zh, Z, B, Eta, alphas, roots, shifts, J, a1, use_mult, res_kind, R1, delta, sat_s, eps,
             alive, bad, k0, guard):
    """Advance every live replica through ``n`` steps in place.

    Each replica is updated with scalar arithmetic that does not involve any
    other replica, so the result is independent of how replicas are batched.
    """
    R, n, d = B.shape
    jx = np.empty(d)
    jz = np.empty(d)
    jh = np.empty(d)
    for r in range(R):
        if not alive[r]:
            continue
        for i in range(n):
            ak = alphas[i]
            root = roots[i]
            eta = a1 * Eta[r, i] if use_mult else 0.0
            if mode == 3:
                for c in range(d):
                    U[r, c] = (1.0 - ak) * U[r, c] + ak * B[r, i, c]
            elif mode == 2:
                for a in range(d):
                    acc = 0.0
                    for c in range(d):
                        acc += U[r, c] * J[a, c]
                    jx[a] = acc + shifts[i] * U[r, a]
                for a in range(d):
                    U[r, a] = U[r, a] + ak * jx[a] + root * B[r, i, a]
            else:
                if mode == 1:
                    for a in range(d):
                        acc_h = 0.0
                        acc_z = 0.0
                        for c in range(d):
                            acc_h += Zh[r, c] * J[a, c]
                            acc_z += Z[r, c] * J[a, c]
                        jh[a] = acc_h + shifts[i] * Zh[r, a]
                        jz[a] = acc_z + shifts[i] * Z[r, a]
                    for a in range(d):
                        noise_h = B[r, i, a] + eta * U[r, a] if use_mult else B[r, i, a]
                        Zh[r, a] = Zh[r, a] + ak * jh[a] + root * noise_h
                        Z[r, a] = Z[r, a] + ak * jz[a] + root * B[r, i, a]
                scale = 0.0
                if res_kind == 1:
                    nrm = 0.0
                    for c in range(d):
                        nrm += U[r, c] * U[r, c]
                    scale = R1 * min(math.sqrt(nrm), sat_s) ** delta
                for a in range(d):
                    acc = 0.0
                    for c in range(d):
                        acc += U[r, c] * J[a, c]
                    if res_kind == 1:
                        acc += scale * U[r, a]
                    elif res_kind == 2:
                        acc += eps * (U[r, a] - math.tanh(U[r, a]))
                    acc += B[r, i, a]
                    if use_mult:
                        acc += eta * U[r, a]
                    jx[a] = acc
                for a in range(d):
                    U[r, a] = U[r, a] + ak * jx[a]
            nu = 0.0
            for c in range(d):
                nu += U[r, c] * U[r, c]
            ok = nu <= guard * guard
            if mode == 1:
                nh = 0.0
                nz = 0.0
                for c in range(d):
                    nh += Zh[r, c] * Zh[r, c]
                    nz += Z[r, c] * Z[r, c]
                ok = ok and nh <= guard * guard and nz <= guard * guard
            if not ok:
                bad[r] = k0 + i + 1
                alive[r] = False
                for c in range(d):
                    U[r, c] = 0.0
                    if mode == 1:
                        Zh[r, c] = 0.0
                        Z[r, c] = 0.0
                break


def _simulate(setup: _Setup, streams: Sequence[RandomStream]):
    """Run ``setup`` for every stream; returns (outputs, first_bad_index)."""
    s, plan, d = setup.schedule, setup.plan, setup.dim
    s.check_unit_step()
    R = len(streams)
    C = len(plan)
    nm = setup.noise if setup.problem is None else setup.problem.noise
    L = nm.chol
    use_mult = setup.mode in ("sa", "coupled") and nm.has_multiplicative
    n_out = 3 if setup.mode == "coupled" else 1
    outs = [np.full((R, C, d), np.nan) for _ in range(n_out)]
    bad = np.full(R, -1, dtype=np.int64)

    op = None
    if setup.mode in ("sa", "coupled"):
        op = setup.problem.operator
        J = op.jacobian
        U = np.broadcast_to(np.asarray(setup.x0, dtype=float) - op.x_star, (R, d)).copy()
    else:
        J = setup.J if setup.J is not None else np.zeros((d, d))
        U = np.zeros((R, d)) if setup.mode == "doug" else np.broadcast_to(
            np.asarray(setup.x0, dtype=float), (R, d)).copy()
    J = np.ascontiguousarray(J, dtype=float)
    Zh = np.zeros((R, d))
    Z = np.zeros((R, d))
    res_kind = _RESIDUALS[op.residual_kind] if op is not None else 0
    res_args = (op.R1, op.delta, op.saturation_s, op.eps) if op is not None else (0.0, 1.0, 1.0, 0.0)

    gens_b = [st.generator(0) for st in streams]
    gens_a = [st.generator(1) for st in streams] if use_mult else None
    chunk = max(1, min(4096, _CHUNK_BUDGET // max(1, R * d)))
    targets = plan.indices
    alive = np.ones(R, dtype=bool)
    no_eta = np.zeros((R, 1))

    def record(j, k):
        root = math.sqrt(step(s, k))
        if setup.mode == "doug":
            outs[0][:, j, :] = U
        else:
            outs[0][:, j, :] = U / root
        if setup.mode == "coupled":
            outs[1][:, j, :] = Zh
            outs[2][:, j, :] = Z
        if not alive.all():
            for o in outs:
                o[~alive, j, :] = np.nan

    k = 0
    for j, target in enumerate(targets):
        while k < target:
            n = min(chunk, target - k)
            E = np.stack([standard_innovations(nm.additive_kind, g, (n, d)) for g in gens_b], axis=0)
            B = np.ascontiguousarray(_rows_times(E, L))
            Eta = (np.stack([multiplicative_innovations(nm.multiplicative_kind, g, n) for g in gens_a], axis=0)
                   if use_mult else no_eta)
            ks = np.arange(k, k + n)
            alphas = np.atleast_1d(step(s, ks)).astype(float)
            shifts = np.atleast_1d(drift_shift(s, ks)).astype(float) if s.xi > 0 else np.zeros(n)
            _advance(_MODES[setup.mode], U, Zh, Z, B, Eta, alphas, np.sqrt(alphas), shifts, J, nm.a1, use_mult, res_kind,
                     *res_args, alive, bad, k, DIVERGENCE_GUARD)
            k += n
        record(j, target)
    return outs, bad


def _single(setup: _Setup, rng: RandomStream):
    outs, bad = _simulate(setup, [rng])
    if bad[0] >= 0:
        raise Diverged(int(bad[0]))
    return [o[0] for o in outs]


def _sa_setup(mode, p: Problem, s: StepSchedule, x0, plan) -> _Setup:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != p.dim or not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be a finite vector of the problem dimension")
    return _Setup(mode, s, plan, p.dim, problem=p, x0=x0)


def run_sa(p: Problem, s: StepSchedule, x0, plan: CheckpointPlan, rng: RandomStream) -> np.ndarray:
    """Single SA trajectory; returns ``y_k`` at the checkpoints, shape ``(C, d)``.

    Raises
    ------
    Diverged
        If ``||x_k - x*||`` exceeds the guard.
    """
    return _single(_sa_setup("sa", p, s, x0, plan), rng)[0]


def run_doug(J, s: StepSchedule, nm: NoiseModel, plan: CheckpointPlan, rng: RandomStream) -> np.ndarray:
    """Single DOUG trajectory ``z_k`` (additive noise of ``nm`` only), shape ``(C, d)``."""
    J = as_square(J, "J")
    return _single(_Setup("doug", s, plan, J.shape[0], J=J, noise=nm), rng)[0]


def run_coupled(p: Problem, s: StepSchedule, x0, plan: CheckpointPlan, rng: RandomStream):
    """Coupled ``(y_k, zhat_k, z_k)`` from one data stream.

    ``zhat`` and ``z`` both use the drift matrices ``J_k`` of the schedule (the
    same ones as :func:`run_doug`), so with no multiplicative noise the two are
    bit-identical.
    """
    return tuple(_single(_sa_setup("coupled", p, s, x0, plan), rng))


def run_averaging(nm: NoiseModel, s: StepSchedule, x0, plan: CheckpointPlan, rng: RandomStream) -> np.ndarray:
    """Step-size averaging of the additive noise; returns ``x_k / sqrt(alpha_k)``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    return _single(_Setup("averaging", s, plan, nm.dim, noise=nm, x0=x0), rng)[0]


_ENGINES = {run_sa: "sa", run_doug: "doug", run_coupled: "coupled", run_averaging: "averaging"}


def _setup_for(engine, kwargs) -> _Setup:
    mode = _ENGINES.get(engine, engine)
    if mode in ("sa", "coupled"):
        return _sa_setup(mode, kwargs["problem"], kwargs["schedule"], kwargs["x0"], kwargs["plan"])
    if mode == "doug":
        J = as_square(kwargs["J"], "J")
        return _Setup("doug", kwargs["schedule"], kwargs["plan"], J.shape[0], J=J, noise=kwargs["noise"])
    if mode == "averaging":
        nm = kwargs["noise"]
        x0 = np.asarray(kwargs.get("x0", np.zeros(nm.dim)), dtype=float).reshape(-1)
        return _Setup("averaging", kwargs["schedule"], kwargs["plan"], nm.dim, noise=nm, x0=x0)
    raise ValueError(f"unknown engine {engine!r}")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("DOUG_LAB_THREADS", "1")))
    except ValueError:
        return 1


def monte_carlo(engine, replicas: int, base_stream: RandomStream, threads: Optional[int] = None,
                block: int = 4096, **kwargs) -> TrajectoryBatch:
    """Run ``replicas`` independent copies of ``engine``.

    Parameters
    ----------
    engine : callable or str
        One of :func:`run_sa`, :func:`run_doug`, :func:`run_coupled`,
        :func:`run_averaging` (or the names ``"sa"``, ``"doug"``,
        ``"coupled"``, ``"averaging"``).
    replicas : int
        Replica ``r`` uses ``RandomStream(base_stream.master_seed, r)``.
    threads : int, optional
        Worker threads; defaults to ``DOUG_LAB_THREADS`` or 1. The result does
        not depend on this value or on ``block``.
    **kwargs
        Engine inputs: ``problem, schedule, x0, plan`` for SA-type engines,
        ``J, schedule, noise, plan`` for DOUG, ``noise, schedule, x0, plan``
        for averaging.

    Raises
    ------
    TooManyDiverged
        If more than 1% of replicas diverge. Fewer diverged replicas are
        dropped and listed in ``TrajectoryBatch.diverged``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    setup = _setup_for(engine, kwargs)
    threads = threads or _default_threads()
    ids = np.arange(replicas)
    groups: List[np.ndarray] = [ids[i:i + block] for i in range(0, replicas, block)]

    def work(g):
        return _simulate(setup, [base_stream.child(int(r)) for r in g])

    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, groups))
    else:
        results = [work(g) for g in groups]
    n_out = len(results[0][0])
    outs = [np.concatenate([r[0][i] for r in results], axis=0) for i in range(n_out)]
    bad = np.concatenate([r[1] for r in results])
    dead = bad >= 0
    if dead.sum() > _MAX_DIVERGED_FRACTION * replicas:
        raise TooManyDiverged(int(dead.sum()), replicas)
    keep = ~dead
    outs = [o[keep] for o in outs]
    plan = setup.plan
    alpha_k = np.atleast_1d(step(setup.schedule, plan.as_array()))
    batch = TrajectoryBatch(plan, outs[0], alpha_k, replica_ids=ids[keep],
                            diverged={int(r): int(bad[r]) for r in np.flatnonzero(dead)})
    if n_out == 3:
        batch.zhat, batch.z = outs[1], outs[2]
    return batch
