"""Explicit constants and finite-time bounds.

The evaluators reproduce the displayed closed forms term by term:

* :func:`mse_bound` bounds ``E||x_k - x*||^2`` of the SA iterate;
* :func:`doug_w1_bound` bounds ``W1(z_k, N(0, Sigma_n))`` for the DOUG recursion;
* :func:`coupling_bound` bounds ``E||z_k - zhat_k||^2`` (multiplicative noise);
* :func:`sa_w1_bound` bounds ``W1(y_k, N(0, Sigma_n))`` for rescaled SA;
* :func:`tail_sandwich`, :func:`mean_error_bound` and :func:`clt_rate` turn
  these into tail, first-moment and CLT statements;
* :func:`rec_sol_closed_form`, :func:`theta_products` and
  :func:`contraction_check` expose the auxiliary lemmas for direct testing.

Conventions. ``V`` solves ``J^T V + V J + I = 0`` and ``iota_V = 1/(4
lambda_max(V))``. The limiting covariances solve ``J S + S J^T + Sigma_b = 0``
(with ``J`` replaced by ``J + I/(2 alpha)`` when ``xi = 1``), which is the
stationary covariance of the DOUG recursion. Bounds evaluated outside their
hypotheses still return a value; a :class:`~douglab.errors.HypothesisViolated`
warning is issued and reports carry ``hypotheses_ok = False``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numba
import numpy as np
from scipy import special

from .errors import EpsOutOfRange, HypothesisViolated, InvalidRho
from .linalg import (
    as_square,
    cholesky,
    extreme_eigenvalues,
    solve_lyapunov,
    spd_inv_sqrt,
    spd_sqrt,
    spectral_norm,
    v_operator_norm,
)
from .model import Problem, moments_of
from .schedule import VARSIGMA1, StepSchedule, drift_matrix, limit_drift, step, validate

__all__ = [
    "ProblemConstants",
    "SpectralConstants",
    "SteinConstants",
    "BoundReport",
    "ThetaDiagnostics",
    "problem_constants",
    "spectral_constants",
    "sigma_max",
    "gaussian_ccdf",
    "mse_bound",
    "doug_w1_bound",
    "coupling_bound",
    "sa_w1_bound",
    "tail_sandwich",
    "mean_error_bound",
    "rec_sol_closed_form",
    "theta_products",
    "theta_lemma_bounds",
    "contraction_check",
    "clt_rate",
]

_TIE_RTOL = 1e-9


# --------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class ProblemConstants:
    """Scalar constants of a problem (certificate, noise and operator)."""

    gamma: float
    L_s: float
    l: float
    u: float
    u_2s: float
    varsigma0: float
    varsigma2: float
    alpha0_cap: float
    A1: float
    B1: float
    B2: float
    B3: float
    B_max: float
    R1: float
    delta: float
    L_F: float
    dim: int


def problem_constants(p: Problem, moments=None) -> ProblemConstants:
    """Collect the constants of ``p``.

    ``varsigma0 = u / l``, ``varsigma2 = u u_2s L_s B2`` and
    ``alpha0_cap = (2 - 3/2) gamma / (u u_2s L_s (L_F + A1))``.
    """
    c = p.certificate
    m = moments or moments_of(p.noise)
    op = p.operator
    A1 = p.noise.A1
    return ProblemConstants(
        gamma=c.gamma, L_s=c.L_s, l=c.l, u=c.u, u_2s=c.u_2s,
        varsigma0=c.u / c.l,
        varsigma2=c.u * c.u_2s * c.L_s * m.B2,
        alpha0_cap=(2.0 - VARSIGMA1) * c.gamma / (c.u * c.u_2s * c.L_s * (op.L_F + A1)),
        A1=A1, B1=float(m.B1), B2=float(m.B2), B3=float(m.B3), B_max=float(m.B_max),
        R1=op.R1, delta=op.delta, L_F=op.L_F, dim=p.dim,
    )


def sigma_max(Sigma) -> float:
    """``max_{beta in [0, 1]} ||S^{1/2}|| ||S^{-1/2}||^{2 + beta}``.

    The expression is monotone in ``beta``, so the maximum sits at an end point.
    """
    root = spectral_norm(spd_sqrt(Sigma))
    inv_root = spectral_norm(spd_inv_sqrt(Sigma))
    return max(root * inv_root ** 2, root * inv_root ** 3)


@dataclass(frozen=True)
class SpectralConstants:
    """Lyapunov solutions and derived norms for a drift ``J`` and schedule."""

    J: np.ndarray
    Sigma_b: np.ndarray
    schedule: StepSchedule
    gamma: float
    V: np.ndarray
    lambda_max: float
    lambda_min: float
    iota_V: float
    eta: float
    Sigma1: np.ndarray
    Sigma2: Optional[np.ndarray]
    sigma_max_n: Dict[int, float]
    J_norm: float
    J_norm_V: float
    J_alpha: np.ndarray
    J_alpha_norm: float
    Sigma_norm_V: Dict[int, float]
    Sigma1_chol: np.ndarray
    Sigma2_chol: Optional[np.ndarray]

    @property
    def dim(self) -> int:
        return self.J.shape[0]

    @property
    def Sigma_n(self) -> np.ndarray:
        """Limit covariance for the schedule: ``Sigma2`` if ``xi = 1`` else ``Sigma1``."""
        return self.Sigma2 if self.schedule.xi == 1.0 else self.Sigma1


def stationary_covariance(J, Sigma_b) -> np.ndarray:
    """Solve ``J S + S J^T + Sigma_b = 0``."""
    return solve_lyapunov(as_square(J).T, Sigma_b)


def spectral_constants(J, Sigma_b, s: StepSchedule, gamma: float) -> SpectralConstants:
    """Compute ``V``, ``iota_V``, ``eta``, ``Sigma1``, ``Sigma2`` and related norms.

    Raises
    ------
    SingularSystem, NotPd
        If ``J`` (or ``J + I/(2 alpha)`` when ``xi = 1``) is not Hurwitz or
        ``Sigma_b`` is degenerate.
    NotHurwitzAfterShift
        If ``xi = 1`` and the shifted drift is unstable.
    """
    J = as_square(J, "J")
    Sb = as_square(Sigma_b, "Sigma_b")
    d = J.shape[0]
    V = solve_lyapunov(J, np.eye(d))
    lmin, lmax = extreme_eigenvalues(V)
    iota = 1.0 / (4.0 * lmax)
    S1 = stationary_covariance(J, Sb)
    Ja = limit_drift(s, J)
    S2 = stationary_covariance(Ja, Sb) if s.xi == 1.0 else None
    smax = {1: sigma_max(S1)}
    snv = {1: v_operator_norm(S1, V)}
    if S2 is not None:
        smax[2] = sigma_max(S2)
        snv[2] = v_operator_norm(S2, V)
    return SpectralConstants(
        J=J, Sigma_b=Sb, schedule=s, gamma=float(gamma), V=V, lambda_max=lmax, lambda_min=lmin,
        iota_V=iota, eta=min(iota / 2.0, 0.75 * gamma), Sigma1=S1, Sigma2=S2, sigma_max_n=smax,
        J_norm=spectral_norm(J), J_norm_V=v_operator_norm(J, V), J_alpha=Ja, J_alpha_norm=spectral_norm(Ja),
        Sigma_norm_V=snv, Sigma1_chol=cholesky(S1), Sigma2_chol=None if S2 is None else cholesky(S2),
    )


@dataclass(frozen=True)
class SteinConstants:
    """Regularity constants of the Gaussian Stein solution in dimension ``d``.

    ``C2`` is not determined by the analysis; it is a user setting (default 2)
    and every report records the value used.
    """

    d: int
    C2: float = 2.0

    @property
    def C1_tilde(self) -> float:
        d = self.d
        return 2 ** 1.5 * (1.0 + 2.0 * d * math.exp(special.gammaln((1 + d) / 2) - special.gammaln(d / 2)))

    def C1(self, beta: float) -> float:
        return self.C1_tilde + 2.0 / (1.0 - beta)


# --------------------------------------------------------------------------
# reports


@dataclass
class BoundReport:
    """Itemized bound: ``total`` is the sum of ``terms`` in displayed order."""

    case_tag: str
    terms: List[Tuple[str, float]]
    hypotheses_ok: bool
    k: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(v for _, v in self.terms))

    def term(self, label: str) -> float:
        for name, v in self.terms:
            if name == label:
                return v
        raise KeyError(label)

    @property
    def labels(self):
        return [name for name, _ in self.terms]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "case_tag": self.case_tag,
            "terms": [{"label": n, "value": v} for n, v in self.terms],
            "total": self.total,
            "hypotheses_ok": self.hypotheses_ok,
            "meta": self.meta,
        }


def _flag(ok: bool, what: str, strict: bool, failed=()) -> None:
    if ok:
        return
    msg = f"{what}: hypotheses violated" + (f" ({', '.join(failed)})" if failed else "")
    if strict:
        raise HypothesisViolated(msg)
    warnings.warn(msg, HypothesisViolated, stacklevel=3)


def _expdiff(rho: float, mu: float, t: float) -> float:
    """``(exp(-rho t) - exp(-mu t)) / (mu - rho)``, with limit ``t exp(-mu t)``."""
    gap = abs(mu - rho)
    if gap * max(t, 1.0) < 1e-12:
        return t * math.exp(-mu * t)
    # factor out the slower exponential so that nothing overflows
    return math.exp(-min(rho, mu) * t) * -math.expm1(-gap * t) / gap


def _over(num: float, den: float) -> float:
    """``num / den`` for a positive denominator, ``inf`` otherwise (hypothesis failed)."""
    return num / den if den > 0 else math.inf


def _xi1_subcase(two_iota: float, three_gamma: float) -> str:
    if abs(two_iota - three_gamma) <= _TIE_RTOL * max(abs(two_iota), abs(three_gamma)):
        return "xi1_c"
    return "xi1_a" if two_iota > three_gamma else "xi1_b"


def _subset_ok(report, names) -> Tuple[bool, list]:
    failed = [n for n in names if n in report.conditions and not report[n].satisfied]
    return not failed, failed


# --------------------------------------------------------------------------
# recursion lemma


def rec_sol_closed_form(u0, mu1, mu2, mu3, rho1, rho2, s: StepSchedule, k: int, strict: bool = False) -> float:
    """Closed-form bound on ``u_k`` for the recursion

    ``u_{k+1} <= (1 - mu1 a_k) u_k + mu2 1{xi<1} a_k exp(-rho1 a (k+K)^(1-xi) / (1-xi)) + mu3 a_k^(1+rho2)``.

    For ``xi = 1`` the sub-case is chosen by comparing ``mu1 alpha`` with
    ``rho2`` (ties within 1e-9 relative use the logarithmic case).
    """
    a, K, xi = s.alpha, s.K, s.xi
    n = k + K
    if xi == 0.0:
        _flag(mu1 * a <= 1.0, "rec_sol case 1", strict, ["mu1*alpha<=1"])
        return (u0 * math.exp(-mu1 * a * k) + mu2 * math.exp(mu1 * a) * _expdiff(rho1, mu1, a * k)
                + mu3 * a ** rho2 / mu1)
    ak = step(s, k)
    if xi < 1.0:
        _flag(K >= (1.0 / (mu1 * a)) ** (1.0 / (1.0 - xi)), "rec_sol case 2", strict, ["K threshold"])
        p = 1.0 - xi
        return (u0 * math.exp(-mu1 * a * (n ** p - K ** p) / p)
                + mu2 * math.exp(mu1 * a) * _expdiff(rho1, mu1, a * n ** p / p)
                + 2.0 * mu3 * ak ** rho2 / mu1)
    head = u0 * (K / n) ** (mu1 * a)
    case = _xi1_subcase(mu1 * a, rho2)
    if case == "xi1_a":
        return head + a * mu3 * ak ** rho2 / (mu1 * a - rho2)
    if case == "xi1_b":
        return head + (2 * a) ** (1 + rho2) * mu3 * n ** (-mu1 * a) / (rho2 - mu1 * a)
    return head + 2 ** (1 + rho2) * mu3 * a * math.log(n) * ak ** rho2


# --------------------------------------------------------------------------
# MSE


def mse_bound(k: int, s: StepSchedule, pc: ProblemConstants, E0: float, strict: bool = False) -> float:
    """Bound on ``E||x_k - x*||^2`` with ``varsigma_1 = 3/2``; ``E0 = E||x_0 - x*||^2``."""
    a, K, xi = s.alpha, s.K, s.xi
    g = VARSIGMA1 * pc.gamma
    s0, s2 = pc.varsigma0, pc.varsigma2
    a0_ok = s.alpha0 <= pc.alpha0_cap
    if xi == 0.0:
        _flag(a0_ok, "mse_bound case 1", strict, ["alpha<=alpha0_cap"])
        return s0 * E0 * math.exp(-g * a * k) + s2 * a / g
    ak = step(s, k)
    n = k + K
    if xi < 1.0:
        p = 1.0 - xi
        ok = a0_ok and K >= (1.0 / (g * a)) ** (1.0 / p)
        _flag(ok, "mse_bound case 2", strict)
        return s0 * E0 * math.exp(-g * a * (n ** p - K ** p) / p) + 2.0 * s2 * ak / g
    ok = a0_ok and g * a > 1.0
    _flag(ok, "mse_bound case 3", strict)
    if g * a <= 1.0:
        return math.inf
    return s0 * E0 * (K / n) ** (g * a) + a * s2 * ak / (g * a - 1.0)


# --------------------------------------------------------------------------
# DOUG


def _phi(spec: SpectralConstants, n: int, stein: SteinConstants, moments, alpha: float) -> dict:
    """phi-constants for covariance ``Sigma_n`` (drift ``J`` if n == 1 else ``J^(alpha)``)."""
    ratio = spec.lambda_max / spec.lambda_min
    jn = spec.J_norm if n == 1 else spec.J_alpha_norm
    smax = spec.sigma_max_n[n]
    snv = spec.Sigma_norm_V[n]
    d = spec.dim
    t10 = stein.C2 * math.sqrt(ratio) * smax * jn
    t11 = t10 * snv
    t12 = t10 * (spec.J_norm_V + 0.5 / alpha) ** 2 * snv
    t2 = ratio ** 1.5 * smax * jn * moments.B2 * moments.B_max
    t3 = ratio ** 1.5 * moments.B_max * jn * smax
    return {
        "phi11": d * t11,
        "phi12": d * t12,
        "phi2": stein.C1_tilde * math.e * (d * t2 + t3) * smax,
    }


def _doug_hypotheses(s: StepSchedule, spec: SpectralConstants):
    a, K, xi = s.alpha, s.K, s.xi
    iota, jv2 = spec.iota_V, spec.J_norm_V ** 2
    cap = min(1.0, 2.0 * iota / jv2)
    failed = []
    if xi == 0.0:
        if not a <= cap:
            failed.append("alpha<=min(1,2iota/|J|_V^2)")
    elif xi < 1.0:
        if not K >= (1.0 / (iota * a)) ** (1.0 / (1.0 - xi)):
            failed.append("K threshold")
        if not s.alpha0 <= cap:
            failed.append("alpha0<=min(1,2iota/|J|_V^2)")
        if not xi * K ** (xi - 1.0) / (2.0 * a) <= min(1.0, iota / 3.0):
            failed.append("shift cap")
    else:
        if not iota * a > 1.0:
            failed.append("iota*alpha>1")
        if not s.alpha0 <= 4.0 * iota / (4.0 * jv2 + a ** -2):
            failed.append("alpha0<=theta cap")
    return not failed, failed


def doug_w1_bound(k: int, s: StepSchedule, J, Sigma_b, spec: SpectralConstants, stein: SteinConstants,
                  moments, strict: bool = False) -> BoundReport:
    """Itemized bound on ``W1(z_k, Sigma_n^{1/2} Z)`` for the DOUG recursion.

    Parameters
    ----------
    J, Sigma_b
        Kept for interface symmetry; the values inside ``spec`` are used.
    moments
        Any object with ``B2`` and ``B_max`` (``Moments`` or ``ProblemConstants``).

    Returns
    -------
    BoundReport
        Terms ``phi2_doug`` (dominant), ``phi12_covariance`` (higher order)
        and ``phi11_initial`` (transient).
    """
    a, K, xi = s.alpha, s.K, s.xi
    iota = spec.iota_V
    n = k + K
    ok, failed = _doug_hypotheses(s, spec)
    _flag(ok, "doug_w1_bound", strict, failed)
    if xi == 0.0:
        ph = _phi(spec, 1, stein, moments, a)
        terms = [
            ("phi2_doug", ph["phi2"] * math.sqrt(a) * math.log(1.0 / a) / iota),
            ("phi12_covariance", ph["phi12"] * a / iota),
            ("phi11_initial", ph["phi11"] * math.exp(-iota * a * k)),
        ]
        tag = "xi0"
    elif xi < 1.0:
        ph = _phi(spec, 1, stein, moments, a)
        p = 1.0 - xi
        terms = [
            ("phi2_doug", 2 * ph["phi2"] / iota * math.sqrt(a) / n ** (xi / 2) * math.log(n ** xi / a)),
            ("phi12_covariance", 2 * ph["phi12"] * a / iota / n ** xi),
            ("phi11_initial", ph["phi11"] * math.exp(-iota * a / p * (n ** p - K ** p))),
        ]
        tag = "xi_mid"
    else:
        ph = _phi(spec, 2, stein, moments, a)
        terms = [
            ("phi2_doug", _over(2 * ph["phi2"] * a ** 1.5, 2 * iota * a - 1) / math.sqrt(n) * math.log(n / a)),
            ("phi12_covariance", _over(ph["phi12"] * a ** 2, iota * a - 1) / n),
            ("phi11_initial", ph["phi11"] * (K / n) ** (iota * a)),
        ]
        tag = "xi1"
    return BoundReport(tag, terms, ok, k=int(k), meta={"C2": stein.C2, "K": K, "failed": failed, **ph})


# --------------------------------------------------------------------------
# coupling


def _vartheta(spec: SpectralConstants, pc: ProblemConstants):
    """Coupling constants ``vartheta_1, vartheta_2``.

    The coupling recursion runs in the ``V``-norm and picks up ``lambda_max``
    from ``E||A||_V^2 <= lambda_max E||A||^2``; returning to the Euclidean norm
    divides by ``lambda_min``. Hence the factor ``lambda_max / lambda_min``
    inside the square roots (``lambda_max^2`` would undershoot whenever
    ``lambda_max lambda_min < 1``).
    """
    r = spec.lambda_max / spec.lambda_min
    return math.sqrt(2 * pc.A1 * pc.varsigma0 * r), math.sqrt(2 * pc.A1 * pc.varsigma2 * r / 3.0)


def _coupling_hypotheses(s, spec, pc):
    rep = validate(s, pc, spec)
    if s.xi == 0.0:
        names = ["alpha0_le_1", "alpha_le_alpha0_cap", "alpha_le_contraction_cap"]
        ok, failed = _subset_ok(rep, names)
    elif s.xi < 1.0:
        ok, failed = _subset_ok(rep, [n for n in rep.conditions if n != "transient_growth"])
    else:
        ok, failed = _subset_ok(rep, ["alpha0_le_1", "alpha0_le_alpha0_cap", "alpha0_le_theta_cap", "mse_rate_gt_1"])
        if not 3 * s.alpha * pc.gamma > 2:
            ok, failed = False, failed + ["3*alpha*gamma>2"]
        if not spec.iota_V * s.alpha > 1:
            ok, failed = False, failed + ["iota*alpha>1"]
    return ok, failed


def coupling_bound(k: int, s: StepSchedule, spec: SpectralConstants, pc: ProblemConstants, E0: float,
                   strict: bool = False) -> float:
    """Bound on ``E||z_k - zhat_k||^2``; ``E0 = E||x_0 - x*||^2``.

    For ``xi = 1`` the sub-case follows the sign of ``2 iota_V - 3 gamma``.
    """
    a, K, xi = s.alpha, s.K, s.xi
    iota, g = spec.iota_V, pc.gamma
    th1, th2 = _vartheta(spec, pc)
    ok, failed = _coupling_hypotheses(s, spec, pc)
    _flag(ok, "coupling_bound", strict, failed)
    if pc.A1 == 0.0:
        return 0.0
    n = k + K
    if xi == 0.0:
        return (th1 ** 2 * E0 * math.exp(iota * a) * _expdiff(1.5 * g, iota, a * k) / 2.0
                + th2 ** 2 * a / (iota * g))
    ak = step(s, k)
    if xi < 1.0:
        p = 1.0 - xi
        return (th1 ** 2 * E0 * math.exp(iota * a) * _expdiff(1.5 * g, iota, a * n ** p / p) / 2.0
                + 4.0 * th2 ** 2 * ak / (iota * g))
    steady = _over(_over(3.0 * th2 ** 2 * a ** 2 * ak, 3 * g * a - 2), iota * a - 1)
    case = _xi1_subcase(2 * iota, 3 * g)
    if case == "xi1_a":
        trans = th1 ** 2 * E0 * (K / n) ** (1.5 * g * a) / (2 * iota - 3 * g)
    elif case == "xi1_b":
        trans = 2 * th1 ** 2 * E0 * math.exp(1.5 * g * a * math.log(2 * K) - iota * a * math.log(n)) / (3 * g - 2 * iota)
    else:
        trans = th1 ** 2 * E0 * a * math.log(n) * math.exp(iota * a * (math.log(2 * K) - math.log(n)))
    return trans + steady


# --------------------------------------------------------------------------
# SA


def _varrho(spec: SpectralConstants, pc: ProblemConstants, s: StepSchedule) -> dict:
    lm, d1 = spec.lambda_max, (1 + pc.delta) / 2
    a, a0, g = s.alpha, s.alpha0, pc.gamma
    bracket = 1.0 / (8 * a ** 2) + math.sqrt(2) * (pc.L_F + pc.A1) / a
    first = math.sqrt(2 * lm) * pc.B1 / a
    out = {
        "rho1": 4 * lm * pc.varsigma0 ** d1 * pc.R1,
        "rho2": 4.0 / 3.0 * lm * pc.varsigma2 ** d1 * pc.R1,
        "rho3": math.sqrt(pc.varsigma0 * lm) * bracket,
        "rho4": first + bracket * math.sqrt(4 * pc.varsigma2 * a0 * lm / (2 * g)),
    }
    out["rho5"] = first + bracket * math.sqrt(2 * a * pc.varsigma2 * a0 / (3 * g * a - 2)) if 3 * g * a > 2 else math.inf
    return out


def sa_w1_bound(k: int, s: StepSchedule, spec: SpectralConstants, pc: ProblemConstants, stein: SteinConstants,
                E0: float, Ev0: float, strict: bool = False) -> BoundReport:
    """Itemized bound on ``W1(y_k, Sigma_n^{1/2} Z)`` for rescaled SA.

    Parameters
    ----------
    E0 : float
        ``E||x_0 - x*||^2``.
    Ev0 : float
        ``E||x_0 - x*||_V``.

    Returns
    -------
    BoundReport
        Seven terms in displayed order: the nonlinearity term, the DOUG terms
        (``phi2_doug``, ``theta2_multiplicative``, ``phi12_covariance``), the
        initial-condition transient and two further transients.
    """
    a, K, xi = s.alpha, s.K, s.xi
    iota, g, dl = spec.iota_V, pc.gamma, pc.delta
    lm = spec.lambda_max
    n = k + K
    rep = validate(s, pc, spec)
    ok, failed = rep.ok, rep.failed()
    _flag(ok, "sa_w1_bound", strict, failed)
    th1, th2 = _vartheta(spec, pc)
    rh = _varrho(spec, pc, s)
    ph1 = _phi(spec, 1, stein, pc, a)
    init = ph1["phi11"] + lm * Ev0 / a
    e_half = math.exp(iota * a / 2)
    E0d = E0 ** ((1 + dl) / 2)
    if xi == 0.0:
        terms = [
            ("rho_nonlinear", rh["rho2"] / (iota * g) * a ** (dl / 2)),
            ("phi2_doug", ph1["phi2"] * math.sqrt(a) / iota * math.log(1.0 / a)),
            ("theta2_multiplicative", th2 * math.sqrt(a) / math.sqrt(iota * g)),
            ("phi12_covariance", ph1["phi12"] / iota * a),
            ("phi11_initial", init * math.exp(-iota * a * k / 2)),
            ("theta1_transient", th1 * math.sqrt(E0) * e_half * math.sqrt(max(_expdiff(1.5 * g, iota, a * k) / 2, 0.0))),
            ("rho_transient", rh["rho1"] * E0d * e_half / math.sqrt(a)
             * _expdiff(3 * (1 + dl) * g / 4, iota / 2, a * k) / 4),
        ]
        tag = "xi0"
        phis = ph1
    elif xi < 1.0:
        p = 1.0 - xi
        delta_t = a * (n ** p - K ** p) / p
        terms = [
            ("rho_nonlinear", (8 * rh["rho2"] / iota + 4 * rh["rho3"] / iota) * a ** (dl / 2) / n ** (dl * xi / 2)),
            ("phi2_doug", ph1["phi2"] / iota * math.sqrt(a) / n ** (xi / 2) * math.log(n ** xi / a)),
            ("theta2_multiplicative", 2 * th2 / math.sqrt(iota * g) * math.sqrt(a) / n ** (xi / 2)),
            ("phi12_covariance", 2 * ph1["phi12"] / iota * a / n ** xi),
            ("phi11_initial", init * math.exp(-iota * delta_t / 2)),
            ("theta1_transient", th1 * math.sqrt(E0) * e_half
             * math.sqrt(max(_expdiff(1.5 * g, iota, a * n ** p / p) / 2, 0.0))),
            ("rho_transient", 4 * e_half
             * (rh["rho1"] / 2 * E0d * math.exp(3 * dl * g * a * K ** p / (4 * p)) + 2 * rh["rho4"] * math.sqrt(E0))
             * _expdiff(0.75 * g, iota / 2, delta_t) / 4),
        ]
        tag = "xi_mid"
        phis = ph1
    else:
        ph2 = _phi(spec, 2, stein, pc, a)
        tag = _xi1_subcase(2 * iota, 3 * g)
        lead = _over((3 * rh["rho2"] * _over(a, 3 * g * a - 2) ** ((1 + dl) / 2) + rh["rho5"]) * 2 * a ** (1 + dl / 2), iota * a - 2)
        terms = [
            ("rho_nonlinear", lead / n ** (dl / 2)),
            ("phi2_doug", _over(2 * ph2["phi2"] * a ** 1.5, 2 * iota * a - 1) / math.sqrt(n) * math.log(n / a)),
            ("theta2_multiplicative", math.sqrt(_over(_over(3 * th2 ** 2 * a ** 3, 3 * g * a - 2), iota * a - 1)) / math.sqrt(n)),
            ("phi12_covariance", _over(ph2["phi12"] * a ** 2, iota * a - 1) / n),
            ("phi11_initial", init * (K / n) ** (iota * a / 2)),
        ]
        growth = E0d * (K / a) ** (3 * dl * g * a / 4)
        sq = math.sqrt(E0)
        if tag == "xi1_a":
            terms += [
                ("rho_transient", (rh["rho1"] * growth + 4 * rh["rho3"] * sq) / (2 * iota - 3 * g) * (K / n) ** (3 * g * a / 4)),
                ("theta1_transient", math.sqrt(th1 ** 2 * E0 / (2 * iota - 3 * g)) * (K / n) ** (3 * g * a / 4)),
            ]
        elif tag == "xi1_b":
            terms += [
                ("rho_transient", (2 * rh["rho1"] * growth + 8 * rh["rho3"] * sq)
                 * (2 * K) ** ((3 * g - 2 * iota) * a / 4) / (3 * g - 2 * iota) * (K / n) ** (iota * a / 2)),
                ("theta1_transient", math.sqrt(2 * th1 ** 2 * E0 / (3 * g - 2 * iota))
                 * math.exp(0.75 * g * a * math.log(2 * K) - iota * a / 2 * math.log(n))),
            ]
        else:
            terms += [
                ("rho_transient", (2 * rh["rho1"] * growth + 8 * rh["rho3"] * sq) * a * math.log(n) * (2 * K / n) ** (iota * a / 2)),
                ("theta1_transient", th1 * math.sqrt(E0 * a * math.log(n)) * (2 * K / n) ** (iota * a / 2)),
            ]
        phis = {**{k_ + "_J": v for k_, v in ph1.items()}, **ph2}
    meta = {"C2": stein.C2, "K": K, "failed": failed, "vartheta1": th1, "vartheta2": th2, **rh, **phis}
    return BoundReport(tag, terms, ok, k=int(k), meta=meta)


# --------------------------------------------------------------------------
# tails, mean error, CLT


def gaussian_ccdf(x):
    """Standard normal upper tail ``P(Z > x)`` via ``erfc`` (accurate deep in the tail)."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def _gaussian_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def tail_sandwich(a: float, zeta, k: int, w1_value: float, Sigma) -> Tuple[float, float]:
    """Bracket ``P(<Y, zeta> > a)`` given ``W1(Y, N(0, Sigma)) <= w1_value``.

    With ``t = a / sqrt(zeta^T Sigma zeta)`` and ``rho = 1 - sqrt(w1)`` the
    half-width is ``(1 - rho) t phi(rho t) + w1 / ((1 - rho) a)``.

    Raises
    ------
    InvalidRho
        If ``w1_value >= 1``.
    """
    if w1_value >= 1.0:
        raise InvalidRho(f"W1 value {w1_value} must be below 1")
    if w1_value > 0.5:
        warnings.warn("tail sandwich used with W1 > 1/2", HypothesisViolated, stacklevel=2)
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    Sigma = as_square(Sigma, "Sigma")
    sd = math.sqrt(float(zeta @ Sigma @ zeta))
    t = a / sd
    centre = float(gaussian_ccdf(t))
    root = math.sqrt(max(w1_value, 0.0))
    rho = 1.0 - root
    # w1 / ((1 - rho) a) = sqrt(w1) / a, which stays finite at w1 = 0
    half = root * t * _gaussian_pdf(rho * t) + root / a
    return centre - half, centre + half


@dataclass(frozen=True)
class MeanErrorBound:
    leading: float
    leading_stderr: float
    higher_order: float
    gaussian_mean_norm: float

    @property
    def total(self) -> float:
        return self.leading + self.higher_order


def gaussian_mean_norm(Sigma, n_mc: int = 10 ** 6, seed: int = 7) -> Tuple[float, float]:
    """Monte Carlo ``E||Sigma^{1/2} Z||`` with its standard error."""
    L = cholesky(Sigma)
    gen = np.random.default_rng(seed)
    total, total_sq, done = 0.0, 0.0, 0
    while done < n_mc:
        m = min(1 << 18, n_mc - done)
        r = np.sqrt(np.sum((gen.standard_normal((m, L.shape[0])) @ L.T) ** 2, axis=1))
        total += r.sum()
        total_sq += (r * r).sum()
        done += m
    mean = total / n_mc
    var = max(total_sq / n_mc - mean ** 2, 0.0)
    return mean, math.sqrt(var / n_mc)


def mean_error_bound(k: int, s: StepSchedule, spec: SpectralConstants, pc: ProblemConstants,
                     stein: SteinConstants, E0: float, Ev0: float, n_mc: int = 10 ** 6, seed: int = 7,
                     strict: bool = False) -> MeanErrorBound:
    """Bound on ``E||x_k - x*||`` for ``xi = 1``.

    Leading term ``sqrt(alpha_k) E||Sigma_2^{1/2} Z||``. The higher-order term
    is ``sqrt(alpha_k)`` times the full :func:`sa_w1_bound`, since the norm is
    1-Lipschitz and ``E||y_k|| <= E||G|| + W1(y_k, G)``.
    """
    if s.xi != 1.0:
        _flag(False, "mean_error_bound needs xi = 1", strict)
    rep = sa_w1_bound(k, s, spec, pc, stein, E0, Ev0, strict=strict)
    m, se = gaussian_mean_norm(spec.Sigma_n, n_mc=n_mc, seed=seed)
    root = math.sqrt(step(s, k))
    return MeanErrorBound(root * m, root * se, root * rep.total, m)


def clt_rate(k: int, s: StepSchedule, const_c: float, strict: bool = False) -> float:
    """Rate shell of the step-size averaging CLT with user constant ``c``."""
    a, K, xi = s.alpha, s.K, s.xi
    n = k + K
    if xi == 0.0:
        return const_c * math.sqrt(a) * math.log(1.0 / a)
    if xi < 1.0:
        return const_c * math.log(n) / n ** (xi / 2)
    _flag(a >= 1.0 and K >= 2 * a - 1, "clt_rate case 3", strict, ["alpha>=1", "K>=2alpha-1"])
    return const_c * math.log(n) / math.sqrt(n)


# --------------------------------------------------------------------------
# Theta products


@numba.njit(cache=True)
def _theta_kernel(A, alphas, ks, beta, Sigma_b):
    """Exact sums of ||Theta_i||^(2+beta) and covariances Sigma_z^k at each k in ks."""
    d = A.shape[1]
    m = ks.shape[0]
    sums = np.zeros(m)
    covs = np.zeros((m, d, d))
    for j in range(m):
        k = ks[j]
        P = np.eye(d)
        tot = 0.0
        for i in range(k - 1, -1, -1):
            if d == 1:
                nrm = abs(P[0, 0])
            else:
                sv = np.linalg.svd(P)[1]
                nrm = sv[0]
            tot += (math.sqrt(alphas[i]) * nrm) ** (2.0 + beta)
            P = P @ A[i]
        sums[j] = tot
    S = np.zeros((d, d))
    pos = 0
    kmax = ks[m - 1]
    for t in range(kmax + 1):
        while pos < m and ks[pos] == t:
            covs[pos] = S
            pos += 1
        if t == kmax:
            break
        S = A[t] @ S @ A[t].T + alphas[t] * Sigma_b
    return sums, covs


@dataclass
class ThetaDiagnostics:
    """Exact Theta sums and covariance gaps at each ``k`` with their lemma bounds."""

    ks: np.ndarray
    sum_norm_2beta: np.ndarray
    cov_gap: np.ndarray
    cov_gap_V: np.ndarray
    sum_bound: np.ndarray
    gap_bound: np.ndarray
    hypotheses_ok: bool


def theta_lemma_bounds(J, s: StepSchedule, ks, beta: float, Sigma_n, V, shift_term: bool = True):
    """Lemma bounds for the Theta sums and covariance gaps at each ``k``.

    For ``0 < xi < 1`` the gap ``G_k = S_k - Sigma1`` obeys
    ``G_{k+1} = A_k G_k A_k^T + alpha_k^2 J_k Sigma1 J_k^T + 2 alpha_k s_k Sigma1``
    where ``s_k`` is the drift shift. The last drive (``= xi Sigma1 / (k + K)``)
    decays like ``(k + K)^(xi - 1)``, slower than ``alpha_k`` once
    ``xi > 1/2``. With ``shift_term`` the bound includes its contribution
    ``sqrt(lambda_max/lambda_min) 4 s_k ||Sigma1||_V / iota_V``; without it the
    bare ``alpha_k`` form is returned.
    """
    J = as_square(J, "J")
    a, K, xi = s.alpha, s.K, s.xi
    lmin, lmax = extreme_eigenvalues(V)
    iota = 1.0 / (4.0 * lmax)
    ratio = lmax / lmin
    jv = v_operator_norm(J, V)
    snv = v_operator_norm(Sigma_n, V)
    ks = np.asarray(ks, dtype=float)
    n = ks + K
    ak = a / n ** xi
    c3 = ratio ** 1.5
    cgap = (jv + 0.5 / a) ** 2 * snv
    if xi == 0.0:
        sb = c3 * a ** (beta / 2) / iota * np.ones_like(ks)
        gb = math.sqrt(ratio) * (snv * np.exp(-iota * a * ks) + cgap * a / iota)
    elif xi < 1.0:
        p = 1.0 - xi
        sb = 2 * c3 * ak ** (beta / 2) / iota
        gb = math.sqrt(ratio) * (snv * np.exp(-iota * a / p * (n ** p - K ** p)) + 2 * cgap * ak / iota)
        if shift_term:
            gb = gb + math.sqrt(ratio) * 4.0 * (xi / (2.0 * a * n ** p)) * snv / iota
    else:
        sb = c3 * 2 * a * ak ** (beta / 2) / (2 * iota * a - 1)
        gb = math.sqrt(ratio) * (snv * (K / n) ** (iota * a) + a * cgap * ak / (iota * a - 1))
    return sb, gb


def _theta_hypotheses(J, s, V) -> bool:
    lmin, lmax = extreme_eigenvalues(V)
    iota = 1.0 / (4.0 * lmax)
    jv2 = v_operator_norm(J, V) ** 2
    a, K, xi = s.alpha, s.K, s.xi
    cap = min(1.0, 2 * iota / jv2)
    if xi == 0.0:
        return a <= cap
    if xi < 1.0:
        return (K >= (1 / (iota * a)) ** (1 / (1 - xi)) and s.alpha0 <= cap
                and xi * K ** (xi - 1) / (2 * a) <= min(1.0, iota / 3))
    return iota * a > 1.0 and s.alpha0 <= 4 * iota / (4 * jv2 + a ** -2)


def theta_products(J, s: StepSchedule, k, beta: float, Sigma_b, Sigma_n, V) -> ThetaDiagnostics:
    """Exact ``sum_i ||Theta_i||^(2+beta)`` and ``||sum_i Theta_i Sigma_b Theta_i^T - Sigma_n||``.

    ``k`` may be a single index or an increasing sequence of indices. The sum
    is formed by backward products ``Theta_i = sqrt(alpha_i) A_{k-1} ... A_{i+1}``
    with ``A_l = I + alpha_l J_l``; the covariance by the forward recursion
    ``S_{t+1} = A_t S_t A_t^T + alpha_t Sigma_b``. ``cov_gap`` is the spectral
    norm of the gap, ``cov_gap_V`` its ``V``-operator norm.
    """
    J = as_square(J, "J")
    ks = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if ks.max() > 10 ** 6:
        raise ValueError("theta_products is limited to k <= 1e6")
    d = J.shape[0]
    kmax = int(ks.max())
    ls = np.arange(max(kmax, 1))
    alphas = np.atleast_1d(step(s, ls)).astype(float)
    if s.xi == 0.0:
        A = np.broadcast_to(np.eye(d) + s.alpha * J, (ls.size, d, d)).copy()
    else:
        from .schedule import drift_shift
        shifts = np.atleast_1d(drift_shift(s, ls))
        A = np.eye(d)[None] + alphas[:, None, None] * (J[None] + shifts[:, None, None] * np.eye(d)[None])
    sums, covs = _theta_kernel(A, alphas, ks, float(beta), as_square(Sigma_b))
    Sn = as_square(Sigma_n)
    gaps = np.array([spectral_norm(C - Sn) for C in covs])
    gaps_v = np.array([v_operator_norm(C - Sn, V) for C in covs])
    sb, gb = theta_lemma_bounds(J, s, ks, beta, Sn, V)
    return ThetaDiagnostics(ks, sums, gaps, gaps_v, np.asarray(sb), np.asarray(gb), _theta_hypotheses(J, s, V))


# --------------------------------------------------------------------------
# contraction lemma


def contraction_check(J, V, eps1: float, eps2: float = 0.0, xi_regime: str = "lt1", alpha: Optional[float] = None,
                      symmetric: bool = False) -> Tuple[float, float, bool]:
    """Check the one-step contraction of ``I + eps1 J + eps1 eps2 I``.

    Parameters
    ----------
    xi_regime : {"lt1", "eq1"}
        ``"lt1"``: ``||I + eps1 J + eps1 eps2 I||_V^2 <= 1 - iota_V eps1``.
        ``"eq1"``: ``||I + eps1 (J + I/(2 alpha))||_V^2 <= 1 - iota_V eps1``
        (``eps2`` unused, ``alpha`` required).
    symmetric : bool
        Use the Euclidean variant for symmetric negative definite ``J`` with
        ``iota_J = min |eig(J)|``. The right-hand sides become
        ``1 - iota_J eps1`` and ``1 - 1.5 (iota_J - 1/(2 alpha)) eps1``.

    Raises
    ------
    EpsOutOfRange
        If the step parameters lie outside the lemma's admissible interval.
    """
    J = as_square(J, "J")
    d = J.shape[0]
    eye = np.eye(d)
    if xi_regime not in ("lt1", "eq1"):
        raise ValueError("xi_regime must be 'lt1' or 'eq1'")
    if xi_regime == "eq1" and not alpha:
        raise ValueError("alpha is required for xi_regime='eq1'")
    if symmetric:
        w = -np.linalg.eigvalsh(0.5 * (J + J.T))
        iota_j, jn = float(w.min()), float(w.max())
        if xi_regime == "lt1":
            M = eye + eps1 * J + eps1 * eps2 * eye
            admissible = (0 <= eps1 <= 8 * iota_j / 9 and 0 <= eps2 <= iota_j / 4
                          and eps1 * (jn + 0.75 * iota_j) <= 2)
            rhs = 1 - iota_j * eps1
        else:
            shift = 0.5 / alpha
            M = eye + eps1 * (J + shift * eye)
            admissible = (iota_j > shift and 0 <= eps1 <= (iota_j - shift) / 2
                          and eps1 * (jn + iota_j - 2 * shift) <= 2)
            rhs = 1 - 1.5 * (iota_j - shift) * eps1
        if not admissible:
            raise EpsOutOfRange("step parameters outside the symmetric contraction interval")
        lhs = spectral_norm(M) ** 2
        return lhs, rhs, bool(lhs <= rhs + 1e-12)
    V = as_square(V, "V")
    lmin, lmax = extreme_eigenvalues(V)
    iota = 1.0 / (4.0 * lmax)
    jv2 = v_operator_norm(J, V) ** 2
    if xi_regime == "lt1":
        admissible = 0 <= eps1 <= min(1.0, 2 * iota / jv2) and 0 <= eps2 <= min(1.0, iota / 3)
        M = eye + eps1 * J + eps1 * eps2 * eye
    else:
        admissible = 2 * iota * alpha >= 1 and 0 <= eps1 <= 4 * iota / (4 * jv2 + alpha ** -2)
        M = eye + eps1 * (J + eye / (2 * alpha))
    if not admissible:
        raise EpsOutOfRange("step parameters outside the contraction interval")
    lhs = v_operator_norm(M, V) ** 2
    rhs = 1 - iota * eps1
    return lhs, rhs, bool(lhs <= rhs + 1e-12)
