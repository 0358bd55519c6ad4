"""Exceptions raised by validity-domain, and the exit codes they map to."""


class ValidityDomainError(Exception):
    """Base class of every error raised on purpose by this package."""

    exit_code = 3


class ConfigurationError(ValidityDomainError):
    """Invalid configuration value, command-line option or model setting."""

    exit_code = 2


class DegenerateDimensionError(ConfigurationError):
    """A dimension of the data has zero range (or zero variance)."""

    def __init__(self, dimension: int, message: str = ""):  # noqa: D107
        self.dimension = dimension
        super().__init__(message or f"Dimension {dimension} has zero range; cannot scale it.")


class DataFormatError(ValidityDomainError):
    """Malformed or insufficient input data."""


class FiltrationTooLargeError(ValidityDomainError):
    """The Rips filtration would exceed the configured edge cap."""


class DegenerateHullError(ValidityDomainError):
    """Points are collinear (2-D) or coplanar (3-D)."""


class FacetValidationError(ValidityDomainError):
    """A facet system is malformed or does not contain the training points."""

    def __init__(self, message: str, violating=None):  # noqa: D107
        self.violating = list(violating) if violating is not None else []
        super().__init__(message)


class ConvergenceError(ValidityDomainError):
    """An iterative method stopped before reaching its tolerance."""


class ExpressionError(ValidityDomainError):
    """An expression cannot be evaluated or relaxed."""


class StageError(ValidityDomainError):
    """A pipeline stage failed; wraps the original cause."""

    def __init__(self, stage: str, cause: BaseException):  # noqa: D107
        self.stage = stage
        self.cause = cause
        super().__init__(f'Stage "{stage}" failed: {cause}')
        if isinstance(cause, ConfigurationError):
            self.exit_code = ConfigurationError.exit_code


class TimeLimitReached(ValidityDomainError):
    """Raised by the command line when the final solve hit its time limit."""

    exit_code = 4
