"""Exception hierarchy.

Every error raised by the package derives from :class:`CensoredLogitError`.
The three middle layers map onto CLI exit codes: schema/usage problems (2),
data validation problems (3) and numerical failures (4).
"""


class CensoredLogitError(Exception):
    """Base class for all package errors."""

    #: pipeline stage that raised, filled in by :func:`censored_logit.estimation.fit`
    stage = None


class SchemaError(CensoredLogitError, KeyError):
    """A required column, flag or field is missing."""

    def __str__(self):
        # KeyError quotes its argument; keep plain messages
        return Exception.__str__(self)


class DomainError(CensoredLogitError, ValueError):
    """An argument is outside its admissible domain."""


class StateError(CensoredLogitError, RuntimeError):
    """An object is used before it holds the required state."""


class DataValidationError(CensoredLogitError, ValueError):
    """Input data violates a documented invariant."""


class DuplicateError(DataValidationError):
    pass


class ChoiceSetParseError(DataValidationError):
    pass


class ConsistencyError(DataValidationError):
    pass


class CompletenessError(DataValidationError):
    pass


class EmptyDatasetError(DataValidationError):
    pass


class NumericError(CensoredLogitError, ArithmeticError):
    """Non-finite intermediate or failed numerical procedure."""


class ConvergenceError(NumericError):
    """Newton iterations did not reach the gradient tolerance."""

    def __init__(self, message, params=None, grad_norm=None, iterations=None):
        super().__init__(message)
        self.params = params
        self.grad_norm = grad_norm
        self.iterations = iterations


class RankDeficiencyError(NumericError):
    """A parameter direction is not identified by the data."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction
