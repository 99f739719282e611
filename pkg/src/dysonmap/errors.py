"""Exception hierarchy and warnings.

Every failure mode the library can diagnose maps to one exception class so
callers (and the CLI exit-code logic) can branch on type instead of message
text.
"""

from __future__ import annotations


class DysonMapError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(DysonMapError):
    """Truncation dimension or index out of the allowed range."""


class ExponentialRangeError(DysonMapError):
    """Matrix exponential argument too large to scale safely."""


class SingularityError(DysonMapError):
    """A coefficient function hits a value that divides something."""


class UndefinedNormError(DysonMapError):
    """Operation needs a nonzero vector norm and got zero."""


class IllConditionedError(DysonMapError):
    """Reciprocal condition estimate below the safe floor.

    Carries the estimate and, when raised from a trajectory, the time stamp
    of the offending sample.
    """

    def __init__(self, message: str, *, rcond: float, t: float | None = None):
        super().__init__(message)
        self.rcond = rcond
        self.t = t


class StepSizeError(DysonMapError):
    """Step-size guard refused the grid; carries a workable step count."""

    def __init__(self, message: str, *, recommended_steps: int):
        super().__init__(message)
        self.recommended_steps = recommended_steps


class DivergenceError(DysonMapError):
    """Non-finite values appeared during integration."""

    def __init__(self, message: str, *, t: float):
        super().__init__(message)
        self.t = t


class NonPositiveMetricError(DysonMapError):
    """Metric lost positive-definiteness beyond tolerance."""

    def __init__(self, message: str, *, t: float, min_eigenvalue: float):
        super().__init__(message)
        self.t = t
        self.min_eigenvalue = min_eigenvalue


class ScenarioInvalidError(DysonMapError):
    """Scenario violates the constraints required for a constant metric.

    ``failed_checks`` lists the names of the violated conditions.
    """

    def __init__(
        self, message: str, *, failed_checks: tuple[str, ...], report: object | None = None
    ):
        super().__init__(message)
        self.failed_checks = failed_checks
        self.report = report


class ConfigError(DysonMapError):
    """Scenario file or CLI configuration is malformed."""


class TruncationWarning(UserWarning):
    """State mass in the guard band exceeded the reporting threshold."""
