"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class AnovaQMCError(Exception):
    """Base class for all package errors."""


class DomainError(AnovaQMCError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConditionViolated(AnovaQMCError):
    """A weight pair lacks the integrability condition the operation needs."""


class DivergenceDetected(AnovaQMCError):
    """Successive truncations of an improper integral did not settle."""


class ClassificationInconclusive(AnovaQMCError):
    """Numeric classification could not decide a condition.

    The partial :class:`~anovaqmc.weights.ConditionReport` is attached as
    ``report`` so the truncation diagnostics are not lost.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class DimensionMismatch(AnovaQMCError, ValueError):
    pass


class DimensionTooLarge(AnovaQMCError, ValueError):
    pass


class MaxDepthExceeded(AnovaQMCError):
    pass


class NonFiniteSample(AnovaQMCError, FloatingPointError):
    pass


class KinkUndefined(AnovaQMCError, ValueError):
    """A derivative was requested exactly on the kink x == y."""


class InvalidVector(AnovaQMCError, ValueError):
    pass


class ParseError(AnovaQMCError, ValueError):
    pass


class MonotonicityViolated(AnovaQMCError):
    pass


class NoConvergence(AnovaQMCError):
    pass


class EigenSolveFailure(AnovaQMCError):
    pass
