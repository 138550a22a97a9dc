"""Problem definitions: operators, noise models and Lyapunov certificates.

An operator is ``F(x) = J_F (x - x*) + R(x)`` with a residual that obeys
``||R(x)|| <= R1 ||x - x*||^(1 + delta)``. Three residual families are built
in:

``none``
    Linear operator.
``saturating_power``
    ``R(x) = R1 (x - x*) min(||x - x*||, s)^delta``. The envelope is attained
    below the saturation radius, so the effect of ``delta`` is as visible as
    possible, and saturation keeps ``R`` globally Lipschitz.
``logcosh_gradient``
    Negative gradient of ``g(x) = 1/2 u^T H u + eps * sum(logcosh(u_i))`` with
    ``u = x - x*``, a smooth SGD test problem with ``delta = 1``.

Noise is ``M = A + b``: ``b`` is i.i.d. additive noise with covariance
``Sigma_b`` and ``A = a1 * eta * (x - x*)`` is multiplicative noise driven by a
scalar innovation ``eta`` with mean 0 and variance 1, so ``A1 = a1**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from .errors import DimensionMismatch, NotPd
from .linalg import (
    as_square,
    cholesky,
    extreme_eigenvalues,
    is_hurwitz,
    solve_lyapunov,
    spd_inv_sqrt,
    spectral_norm,
)

__all__ = [
    "RESIDUAL_KINDS",
    "ADDITIVE_KINDS",
    "MULTIPLICATIVE_KINDS",
    "Operator",
    "NoiseModel",
    "Moments",
    "LyapunovCertificate",
    "Problem",
    "linear_operator",
    "saturating_operator",
    "logcosh_operator",
    "residual",
    "eval_operator",
    "standard_innovations",
    "multiplicative_innovations",
    "sample_noise",
    "moments_of",
    "quadratic_certificate",
]

RESIDUAL_KINDS = ("none", "saturating_power", "logcosh_gradient")
ADDITIVE_KINDS = ("gaussian", "uniform_cube", "rademacher_product", "centered_exponential")
MULTIPLICATIVE_KINDS = ("none", "scalar_rademacher", "scalar_gaussian")


def _logcosh_envelope() -> float:
    """``max_{t > 0} (t - tanh t) / t^2``, the ``R1 / eps`` ratio of logcosh."""
    res = optimize.minimize_scalar(lambda t: -(t - math.tanh(t)) / t ** 2, bounds=(1e-3, 20.0), method="bounded",
                                   options={"xatol": 1e-12})
    return float(-res.fun) * (1 + 1e-9)


@dataclass(frozen=True)
class Operator:
    """``F(x) = J_F (x - x*) + R(x)``.

    Use the constructors :func:`linear_operator`, :func:`saturating_operator`
    and :func:`logcosh_operator` rather than building this directly.
    """

    jacobian: np.ndarray
    x_star: np.ndarray
    residual_kind: str = "none"
    R1: float = 0.0
    delta: float = 1.0
    saturation_s: float = 1.0
    hessian: Optional[np.ndarray] = None
    eps: float = 0.0

    def __post_init__(self):
        J = as_square(self.jacobian, "jacobian")
        xs = np.asarray(self.x_star, dtype=float).reshape(-1)
        if xs.size != J.shape[0]:
            raise DimensionMismatch(f"x_star has length {xs.size} but J is {J.shape}")
        if self.residual_kind not in RESIDUAL_KINDS:
            raise ValueError(f"unknown residual kind {self.residual_kind!r}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.R1 < 0 or self.saturation_s <= 0:
            raise ValueError("R1 must be >= 0 and the saturation radius > 0")
        if not is_hurwitz(J):
            raise ValueError("jacobian is not Hurwitz")
        object.__setattr__(self, "jacobian", J)
        object.__setattr__(self, "x_star", xs)

    @property
    def dim(self) -> int:
        return self.jacobian.shape[0]

    @cached_property
    def L_F(self) -> float:
        """Global Lipschitz constant of ``F``."""
        norm_j = spectral_norm(self.jacobian)
        if self.residual_kind == "saturating_power":
            return norm_j + self.R1 * (1.0 + self.delta) * self.saturation_s ** self.delta
        # logcosh: grad F = -(H + eps diag(sech^2)) lies between -H and J_F = -(H + eps I)
        return norm_j


def linear_operator(J, x_star=None) -> Operator:
    J = as_square(J, "J")
    xs = np.zeros(J.shape[0]) if x_star is None else x_star
    return Operator(J, xs)


def saturating_operator(J, R1, delta, s=1.0, x_star=None) -> Operator:
    J = as_square(J, "J")
    xs = np.zeros(J.shape[0]) if x_star is None else x_star
    return Operator(J, xs, "saturating_power", R1=float(R1), delta=float(delta), saturation_s=float(s))


def logcosh_operator(H, eps, x_star=None) -> Operator:
    """Operator ``-grad g`` for ``g(u) = u^T H u / 2 + eps sum logcosh(u_i)``.

    ``J_F = -(H + eps I)`` and ``R(x) = eps (u - tanh u)`` with ``delta = 1``.
    """
    H = as_square(H, "H")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    cholesky(0.5 * (H + H.T))  # H must be positive definite
    xs = np.zeros(H.shape[0]) if x_star is None else x_star
    J = -(H + eps * np.eye(H.shape[0]))
    return Operator(J, xs, "logcosh_gradient", R1=eps * _logcosh_envelope(), delta=1.0, hessian=H, eps=float(eps))


def residual(op: Operator, U: np.ndarray) -> np.ndarray:
    """Residual ``R`` at centered points ``U = x - x*`` (rows are points)."""
    if op.residual_kind == "none":
        return np.zeros_like(U)
    if op.residual_kind == "saturating_power":
        r = np.sqrt(np.sum(U * U, axis=-1, keepdims=True))
        return op.R1 * U * np.minimum(r, op.saturation_s) ** op.delta
    return op.eps * (U - np.tanh(U))


def _rows_times(U: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``U @ M.T`` computed column by column.

    Each output row depends on its input row only through elementwise
    arithmetic, so results do not depend on how many rows are batched together.
    """
    out = U[..., 0:1] * M[:, 0]
    for j in range(1, M.shape[1]):
        out = out + U[..., j:j + 1] * M[:, j]
    return out


def eval_operator(op: Operator, x) -> np.ndarray:
    """``F(x)``; ``x`` may be a single point or an ``(n, d)`` array of points."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != op.dim:
        raise DimensionMismatch(f"x has trailing dimension {x.shape[-1]}, operator has {op.dim}")
    U = x - op.x_star
    return _rows_times(U, op.jacobian) + residual(op, U)


@dataclass(frozen=True)
class Moments:
    """``B_mu = E ||b||^mu`` for ``mu = 1, 2, 3`` and ``B_max = max(B1, B2, B3, 1)``."""

    B1: float
    B2: float
    B3: float
    method: str = "closed_form"
    stderr: tuple = (0.0, 0.0, 0.0)

    @property
    def B_max(self) -> float:
        return max(self.B1, self.B2, self.B3, 1.0)


@dataclass(frozen=True)
class NoiseModel:
    """Additive noise with covariance ``Sigma_b`` plus optional multiplicative noise.

    Parameters
    ----------
    additive_kind : str
        One of :data:`ADDITIVE_KINDS`. Every kind is standardized to identity
        covariance and then mapped through the Cholesky factor of ``sigma_b``.
    sigma_b : array_like
        Positive definite covariance of ``b``, or the zero matrix to switch
        the additive noise off.
    multiplicative_kind : str
        One of :data:`MULTIPLICATIVE_KINDS`.
    multiplicative_scale : float
        ``a1 >= 0``; the multiplicative term is ``a1 * eta * (x - x*)``.
    """

    additive_kind: str = "gaussian"
    sigma_b: np.ndarray = field(default_factory=lambda: np.eye(1))
    multiplicative_kind: str = "none"
    multiplicative_scale: float = 0.0

    def __post_init__(self):
        S = as_square(self.sigma_b, "sigma_b")
        if self.additive_kind not in ADDITIVE_KINDS:
            raise ValueError(f"unknown additive kind {self.additive_kind!r}")
        if self.multiplicative_kind not in MULTIPLICATIVE_KINDS:
            raise ValueError(f"unknown multiplicative kind {self.multiplicative_kind!r}")
        if self.multiplicative_scale < 0:
            raise ValueError("multiplicative_scale must be >= 0")
        object.__setattr__(self, "sigma_b", S)
        if not self.is_silent:
            cholesky(S)

    @property
    def dim(self) -> int:
        return self.sigma_b.shape[0]

    @property
    def is_silent(self) -> bool:
        """True when ``sigma_b`` is exactly zero (additive noise switched off)."""
        return not np.any(self.sigma_b)

    @cached_property
    def chol(self) -> np.ndarray:
        if self.is_silent:
            return np.zeros_like(self.sigma_b)
        return cholesky(self.sigma_b)

    @property
    def a1(self) -> float:
        return 0.0 if self.multiplicative_kind == "none" else float(self.multiplicative_scale)

    @property
    def A1(self) -> float:
        """Conditional variance scale: ``E[||A||^2 | x] = A1 ||x - x*||^2``."""
        return self.a1 ** 2

    @property
    def has_multiplicative(self) -> bool:
        return self.a1 > 0.0


def standard_innovations(kind: str, gen: np.random.Generator, shape) -> np.ndarray:
    """Draw i.i.d. coordinates with mean 0 and variance 1.

    Draws from ``gen`` are consumed sequentially, so splitting one request into
    several consecutive ones yields the same numbers.
    """
    if kind == "gaussian":
        return gen.standard_normal(shape)
    if kind == "uniform_cube":
        return math.sqrt(3.0) * (2.0 * gen.random(shape) - 1.0)
    if kind == "rademacher_product":
        return np.where(gen.random(shape) < 0.5, -1.0, 1.0)
    if kind == "centered_exponential":
        return gen.standard_exponential(shape) - 1.0
    raise ValueError(f"unknown additive kind {kind!r}")


def multiplicative_innovations(kind: str, gen: np.random.Generator, shape) -> np.ndarray:
    """Scalar innovations ``eta`` with mean 0 and variance 1."""
    if kind == "scalar_gaussian":
        return gen.standard_normal(shape)
    if kind == "scalar_rademacher":
        return np.where(gen.random(shape) < 0.5, -1.0, 1.0)
    return np.zeros(shape)


def sample_noise(nm: NoiseModel, x, x_star, rng):
    """One draw of ``(a_term, b_term)`` at state ``x``.

    Parameters
    ----------
    rng : RandomStream or numpy Generator
        A :class:`~douglab.sim.RandomStream` uses its additive and
        multiplicative sub-streams; a bare Generator is used for both.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    if hasattr(rng, "generator"):
        gb, ga = rng.generator(0), rng.generator(1)
    else:
        gb = ga = rng
    b = nm.chol @ standard_innovations(nm.additive_kind, gb, nm.dim)
    if not nm.has_multiplicative:
        return np.zeros_like(x), b
    eta = float(multiplicative_innovations(nm.multiplicative_kind, ga, ()))
    return nm.a1 * eta * (x - x_star), b


def _abs_moment_1d(kind: str, mu: float) -> float:
    """``E|e|^mu`` for a standardized scalar innovation."""
    if kind == "gaussian":
        return 2 ** (mu / 2) * special.gamma((1 + mu) / 2) / math.sqrt(math.pi)
    if kind == "uniform_cube":
        return math.sqrt(3.0) ** mu / (mu + 1)
    if kind == "rademacher_product":
        return 1.0
    # centered exponential: E|E - 1|^mu
    head, _ = integrate.quad(lambda t: (1 - t) ** mu * math.exp(-t), 0.0, 1.0, epsabs=1e-14)
    return head + math.exp(-1.0) * special.gamma(mu + 1)


def moments_of(nm: NoiseModel, n_mc: int = 10 ** 6, seed: int = 20240917) -> Moments:
    """Absolute moments ``B1, B2, B3`` of the additive noise.

    ``B2 = tr(Sigma_b)`` always. ``B1`` and ``B3`` are exact for scalar noise
    of every kind, for isotropic Gaussian noise (chi moments) and for isotropic
    Rademacher noise (constant norm); otherwise they come from an ``n_mc``-draw
    Monte Carlo estimate with its standard error recorded.
    """
    S = nm.sigma_b
    d = nm.dim
    if nm.is_silent:
        return Moments(0.0, 0.0, 0.0)
    B2 = float(np.trace(S))
    if d == 1:
        sig = math.sqrt(S[0, 0])
        return Moments(sig * _abs_moment_1d(nm.additive_kind, 1.0), B2, sig ** 3 * _abs_moment_1d(nm.additive_kind, 3.0))
    iso = np.allclose(S, S[0, 0] * np.eye(d), rtol=0, atol=1e-14 * S[0, 0])
    if iso and nm.additive_kind == "gaussian":
        sig = math.sqrt(S[0, 0])

        def chi(mu):
            return 2 ** (mu / 2) * math.exp(special.gammaln((d + mu) / 2) - special.gammaln(d / 2))

        return Moments(sig * chi(1), B2, sig ** 3 * chi(3))
    if iso and nm.additive_kind == "rademacher_product":
        r = math.sqrt(S[0, 0] * d)
        return Moments(r, B2, r ** 3)
    gen = np.random.default_rng(seed)
    e = standard_innovations(nm.additive_kind, gen, (n_mc, d))
    norms = np.sqrt(np.sum((e @ nm.chol.T) ** 2, axis=1))
    m1, m3 = norms, norms ** 3
    se = (float(m1.std() / math.sqrt(n_mc)), 0.0, float(m3.std() / math.sqrt(n_mc)))
    return Moments(float(m1.mean()), B2, float(m3.mean()), method="monte_carlo", stderr=se)


@dataclass(frozen=True)
class LyapunovCertificate:
    """Quadratic Lyapunov function ``Phi(u) = u^T P u`` with its constants.

    ``l Phi(u) <= ||u||^2 <= u Phi(u)``, ``Phi`` is ``L_s``-smooth in the
    Euclidean norm (``u_2s = 1``) and ``<grad Phi(u), F(x)> <= -2 gamma Phi(u)``.
    """

    P: np.ndarray
    gamma: float
    L_s: float
    l: float
    u: float
    u_2s: float = 1.0

    def phi(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return np.einsum("...i,ij,...j->...", U, self.P, U)


def _residual_drift(op: Operator, P: np.ndarray) -> float:
    """``c`` with ``<grad Phi(u), R(x)> <= 2 c Phi(u)`` for the residual family."""
    if op.residual_kind == "none":
        return 0.0
    lo, hi = extreme_eigenvalues(P)
    if op.residual_kind == "saturating_power":
        # R is a nonnegative multiple (at most R1 s^delta) of u
        return op.R1 * op.saturation_s ** op.delta
    # logcosh: ||R(x)|| <= eps ||u|| componentwise
    return op.eps * hi / lo


def quadratic_certificate(op: Operator, P=None) -> LyapunovCertificate:
    """Certificate for ``op`` from a quadratic ``Phi(u) = u^T P u``.

    With ``P`` omitted, ``P = I/2`` is tried first and the solution ``V`` of
    ``J^T V + V J + I = 0`` is used if the identity gives no negative drift.

    ``gamma`` is half the smallest generalized eigenvalue of
    ``-(P J + J^T P)`` relative to ``P``, minus the worst-case drift added by
    the residual.
    """
    J = op.jacobian
    candidates = [np.asarray(P, dtype=float)] if P is not None else [0.5 * np.eye(op.dim),
                                                                     solve_lyapunov(J, np.eye(op.dim))]
    best = None
    for Pc in candidates:
        Pc = as_square(Pc, "P")
        Pc = 0.5 * (Pc + Pc.T)
        root_inv = spd_inv_sqrt(Pc)
        S = -(Pc @ J + J.T @ Pc)
        mu, _ = extreme_eigenvalues(root_inv @ (0.5 * (S + S.T)) @ root_inv)
        gamma = 0.5 * mu - _residual_drift(op, Pc)
        lo, hi = extreme_eigenvalues(Pc)
        cert = LyapunovCertificate(P=Pc, gamma=float(gamma), L_s=2.0 * hi, l=1.0 / hi, u=1.0 / lo)
        if gamma > 0:
            return cert
        best = best or cert
    if P is not None:
        return best
    raise NotPd("no quadratic certificate with positive drift rate was found")


@dataclass(frozen=True)
class Problem:
    """An SA problem: operator, noise model and Lyapunov certificate."""

    operator: Operator
    noise: NoiseModel
    certificate: Optional[LyapunovCertificate] = None

    def __post_init__(self):
        if self.operator.dim != self.noise.dim:
            raise DimensionMismatch("operator and noise dimensions differ")
        if self.certificate is None:
            object.__setattr__(self, "certificate", quadratic_certificate(self.operator))

    @property
    def dim(self) -> int:
        return self.operator.dim

    @property
    def x_star(self) -> np.ndarray:
        return self.operator.x_star
