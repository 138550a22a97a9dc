"""Step-size schedules ``alpha_k = alpha / (k + K)^xi`` and their admissibility.

The theorems only hold for steps that are small enough and offsets ``K`` that
are large enough. :func:`validate` collects every such inequality for the
active ``xi`` regime into an :class:`AdmissibilityReport`; nothing here
raises on an inadmissible schedule, since running outside the hypotheses is
allowed and only flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, NamedTuple

import numpy as np

from .errors import NotFound, NotHurwitzAfterShift
from .linalg import as_square, is_hurwitz

__all__ = [
    "VARSIGMA1",
    "StepSchedule",
    "Condition",
    "AdmissibilityReport",
    "step",
    "drift_shift",
    "drift_matrix",
    "limit_drift",
    "validate",
    "find_min_K",
]

#: Fixed constant of the MSE lemma (its ``1 < varsigma_1 < 2`` is pinned at 3/2).
VARSIGMA1 = 1.5


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha_k = alpha / (k + K)^xi``.

    Parameters
    ----------
    alpha : float
        Positive scale.
    K : int
        Offset, at least 1.
    xi : float
        Decay exponent in ``[0, 1]``. ``xi = 0`` is a constant step.
    """

    alpha: float
    K: int = 1
    xi: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be an integer >= 1, got {self.K}")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "xi", float(self.xi))

    @property
    def alpha0(self) -> float:
        """The first step ``alpha / K^xi``."""
        return self.alpha / self.K ** self.xi

    @property
    def regime(self) -> str:
        """``"xi0"``, ``"xi_mid"`` or ``"xi1"``."""
        if self.xi == 0.0:
            return "xi0"
        if self.xi == 1.0:
            return "xi1"
        return "xi_mid"

    def with_K(self, K: int) -> "StepSchedule":
        return replace(self, K=int(K))

    def check_unit_step(self) -> None:
        """Raise ``ValueError`` unless ``alpha_0 <= 1``.

        The analysis assumes ``alpha_k <= 1`` throughout and says nothing about
        larger steps, so the simulation engines refuse them.
        """
        if self.alpha0 > 1.0:
            raise ValueError(f"alpha_0 = {self.alpha0:g} exceeds 1")


def step(s: StepSchedule, k):
    """``alpha / (k + K)^xi``; accepts scalars or arrays of ``k``."""
    k = np.asarray(k, dtype=float)
    out = s.alpha / (k + s.K) ** s.xi
    return float(out) if out.ndim == 0 else out


def drift_shift(s: StepSchedule, k):
    """Diagonal shift ``xi / (2 alpha (k + K)^(1 - xi))`` added to ``J``."""
    if s.xi == 0.0:
        return 0.0 if np.ndim(k) == 0 else np.zeros(np.shape(k))
    k = np.asarray(k, dtype=float)
    out = s.xi / (2.0 * s.alpha * (k + s.K) ** (1.0 - s.xi))
    return float(out) if out.ndim == 0 else out


def drift_matrix(s: StepSchedule, k: int, J) -> np.ndarray:
    """``J_k = J + drift_shift(s, k) I``."""
    J = as_square(J, "J")
    if s.xi == 0.0:
        return J.copy()
    return J + drift_shift(s, k) * np.eye(J.shape[0])


def limit_drift(s: StepSchedule, J) -> np.ndarray:
    """Limit of :func:`drift_matrix` as ``k -> inf``.

    ``J`` for ``xi < 1`` and ``J + I / (2 alpha)`` for ``xi = 1``.

    Raises
    ------
    NotHurwitzAfterShift
        If ``xi = 1`` and the shifted matrix is not Hurwitz.
    """
    J = as_square(J, "J")
    if s.xi < 1.0:
        return J.copy()
    Ja = J + np.eye(J.shape[0]) / (2.0 * s.alpha)
    if not is_hurwitz(Ja):
        raise NotHurwitzAfterShift(f"J + I/(2*{s.alpha:g}) is not Hurwitz")
    return Ja


class Condition(NamedTuple):
    """One checked inequality: ``actual (op) required``."""

    required: float
    actual: float
    satisfied: bool
    relation: str = "<="


@dataclass
class AdmissibilityReport:
    """Map from condition name to :class:`Condition`."""

    schedule: StepSchedule
    conditions: Dict[str, Condition] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.satisfied for c in self.conditions.values())

    def failed(self):
        return [name for name, c in self.conditions.items() if not c.satisfied]

    def __getitem__(self, name):
        return self.conditions[name]

    def __contains__(self, name):
        return name in self.conditions

    def to_dict(self):
        return {
            name: {"required": c.required, "actual": c.actual, "relation": c.relation, "satisfied": c.satisfied}
            for name, c in self.conditions.items()
        }


def _raw_conditions(alpha, K, xi, pc, spec):
    """Each condition as ``(required, actual, relation)``; ``K`` may be an array."""
    K = np.asarray(K, dtype=float)
    a0 = alpha / K ** xi
    gamma, delta = pc.gamma, pc.delta
    iota, jv2 = spec.iota_V, spec.J_norm_V ** 2
    contraction_cap = min(1.0, 2.0 * iota / jv2)
    out = {"alpha0_le_1": (1.0, a0, "<=")}
    if xi == 0.0:
        out["alpha_le_alpha0_cap"] = (pc.alpha0_cap, a0, "<=")
        out["alpha_le_contraction_cap"] = (contraction_cap, a0, "<=")
    elif xi < 1.0:
        p = 1.0 / (1.0 - xi)
        out["alpha0_le_alpha0_cap"] = (pc.alpha0_cap, a0, "<=")
        out["alpha0_le_contraction_cap"] = (contraction_cap, a0, "<=")
        out["K_ge_mse_threshold"] = ((1.0 / (VARSIGMA1 * gamma * alpha)) ** p, K, ">=")
        out["K_ge_theta_threshold"] = ((1.0 / (iota * alpha)) ** p, K, ">=")
        out["shift_le_cap"] = (min(1.0, iota / 3.0), xi * K ** (xi - 1.0) / (2.0 * alpha), "<=")
        out["transient_growth"] = (
            np.sqrt(a0),
            np.exp(-3.0 * delta * gamma * alpha * K ** (1.0 - xi) / (4.0 * (1.0 - xi))),
            "<=",
        )
    else:
        out["alpha0_le_alpha0_cap"] = (pc.alpha0_cap, a0, "<=")
        out["iotaV_alpha_gt_2"] = (2.0, iota * alpha, ">")
        out["three_delta_gamma_alpha_gt_2"] = (2.0, 3.0 * delta * gamma * alpha, ">")
        out["mse_rate_gt_1"] = (1.0, VARSIGMA1 * gamma * alpha, ">")
        out["alpha0_le_theta_cap"] = (4.0 * iota / (4.0 * jv2 + alpha ** -2), a0, "<=")
    return out


def _holds(required, actual, relation):
    if relation == "<=":
        return actual <= required
    if relation == ">=":
        return actual >= required
    return actual > required


def validate(s: StepSchedule, pc, spec) -> AdmissibilityReport:
    """Check every step-size hypothesis for the active ``xi`` regime.

    Parameters
    ----------
    s : StepSchedule
    pc : ProblemConstants
        Needs ``gamma``, ``delta`` and ``alpha0_cap``.
    spec : SpectralConstants
        Needs ``iota_V`` and ``J_norm_V``.

    Returns
    -------
    AdmissibilityReport
        Failures are recorded, never raised.
    """
    report = AdmissibilityReport(schedule=s)
    for name, (req, act, rel) in _raw_conditions(s.alpha, s.K, s.xi, pc, spec).items():
        req, act = float(req), float(act)
        report.conditions[name] = Condition(req, act, bool(_holds(req, act, rel)), rel)
    return report


def find_min_K(template: StepSchedule, pc, spec, K_max: int = 10 ** 7, block: int = 1 << 16) -> int:
    """Smallest ``K <= K_max`` for which :func:`validate` passes.

    The scan is linear over ``K = 1, 2, ...``, evaluated in vectorized blocks.

    Raises
    ------
    NotFound
        If no ``K`` up to ``K_max`` satisfies every condition.
    """
    start = 1
    while start <= K_max:
        Ks = np.arange(start, min(start + block, K_max + 1), dtype=float)
        ok = np.ones(Ks.size, dtype=bool)
        for req, act, rel in _raw_conditions(template.alpha, Ks, template.xi, pc, spec).values():
            ok &= np.broadcast_to(_holds(req, act, rel), Ks.shape)
            if not ok.any():
                break
        if ok.any():
            return int(Ks[np.argmax(ok)])
        start += block
    raise NotFound(f"no K <= {K_max} satisfies the step-size hypotheses")
