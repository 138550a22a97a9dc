"""Exception types shared across the package."""


class DougLabError(Exception):
    """Base class for all library errors."""


class SingularSystem(DougLabError):
    """A linear system (usually a Kronecker-form Lyapunov system) is singular."""


class NotSymmetric(DougLabError):
    """A matrix expected to be symmetric is not."""


class NotPd(DougLabError):
    """A matrix expected to be positive definite is not."""


class DimensionMismatch(DougLabError, ValueError):
    """Operand shapes are incompatible."""


class NotHurwitzAfterShift(DougLabError):
    """J + I/(2 alpha) is not Hurwitz, so the xi = 1 limit drift is unstable."""


class NotFound(DougLabError):
    """A search (for instance over K) found no admissible value."""


class Diverged(DougLabError):
    """A trajectory left the divergence guard.

    Attributes
    ----------
    index : int
        First iteration index at which the guard was exceeded.
    """

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"iterate diverged at k={self.index}")


class TooManyDiverged(DougLabError):
    """More than 1% of Monte Carlo replicas diverged."""

    def __init__(self, n_diverged, replicas):
        self.n_diverged = int(n_diverged)
        self.replicas = int(replicas)
        super().__init__(f"{n_diverged} of {replicas} replicas diverged")


class HypothesisViolated(DougLabError, UserWarning):
    """A bound was evaluated outside the hypotheses of its lemma.

    Used as a warning category by default; the value is still returned.
    """


class InvalidRho(DougLabError, ValueError):
    """The tail sandwich needs W1 < 1 so that rho = 1 - sqrt(W1) is positive."""


class EpsOutOfRange(DougLabError, ValueError):
    """A step parameter lies outside the admissible interval of the contraction lemma."""


class EmptySample(DougLabError, ValueError):
    """A sample set has no points."""


class TooLarge(DougLabError, ValueError):
    """Input exceeds the size limit of an exact algorithm."""


class InsufficientData(DougLabError, ValueError):
    """Too few usable points for a fit."""


class ConfigError(DougLabError, ValueError):
    """An experiment configuration failed validation."""
