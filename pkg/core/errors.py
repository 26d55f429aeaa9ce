"""Exception hierarchy for the rebound diagnosis pipeline."""

from typing import Optional, Sequence


class PipelineError(Exception):
    """Base class; `exit_code` is the CLI status for the error category."""

    exit_code = 1


class ConfigError(PipelineError):
    exit_code = 2


class DataError(PipelineError):
    exit_code = 3


class ParseError(DataError):
    """Malformed input row."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DataError):
    pass


class CoverageError(DataError):
    """Requested dates fall outside the loaded data."""


class NumericError(PipelineError):
    exit_code = 4


class DomainError(NumericError):
    """Model evaluated at or after the critical time."""


class DegenerateBasisError(NumericError):
    pass


class InsufficientDataError(NumericError):
    pass


class NumericFailureError(NumericError):
    """Non-finite values during refinement; keeps the last good iterate."""

    def __init__(self, message: str, last_iterate: Optional[Sequence[float]] = None):
        self.last_iterate = None if last_iterate is None else tuple(last_iterate)
        super().__init__(message)


class FitFailure(NumericError):
    pass


class UndefinedSharpeError(NumericError):
    pass


class UndefinedPosteriorError(NumericError):
    pass


class StageOrderError(PipelineError):
    exit_code = 5


class InfeasibleConstraintError(PipelineError):
    exit_code = 6
