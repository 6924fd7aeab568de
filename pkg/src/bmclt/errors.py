"""Exception types.

Input-validation failures derive from ``ValueError``; failures that happen
while a computation is running derive from ``RuntimeError``. The CLI maps the
first family to exit code 1 and the second to exit code 2.
"""


class BmcltError(Exception):
    """Base class for all package errors."""


class ValidationError(BmcltError, ValueError):
    pass


class ComputationError(BmcltError, RuntimeError):
    pass


class ScheduleDegenerate(ValidationError):
    pass


class TraceTooShort(ValidationError):
    pass


class NonFiniteInput(ValidationError):
    pass


class InvalidLevel(ValidationError):
    pass


class ZeroVarianceEstimate(ValidationError):
    pass


class LagTooLarge(ValidationError):
    pass


class InvalidRho(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


class ConfigInvalid(ValidationError):
    pass


class MissingCells(ValidationError):
    pass


class InvalidRange(ValidationError):
    pass


class EmptyTrace(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NotPositiveDefinite(ComputationError):
    pass


class NumericalBreakdown(ComputationError):
    pass


class DegenerateBeta(ComputationError):
    pass


class NonConvergent(ComputationError):
    pass
