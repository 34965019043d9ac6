"""Exception hierarchy shared by every module."""


class NNDeflateError(Exception):
    pass


class ConfigurationError(NNDeflateError, ValueError):
    """Bad shapes, unknown names, inconsistent settings."""


class NumericDomainError(NNDeflateError, ArithmeticError):
    """Division by zero, fractional power of a negative base, and the like."""


class SourceCollapseError(NumericDomainError):
    """The trained network reached zero distance from a deflation source."""


class TrainingError(NNDeflateError, RuntimeError):
    """Non-finite loss or gradient during optimisation."""

    def __init__(self, message, iteration=None, point=None):
        super().__init__(message)
        self.iteration = iteration
        self.point = point


class UsageError(NNDeflateError, RuntimeError):
    """API misuse, e.g. running backward twice on one recording."""


class RecordIOError(NNDeflateError, OSError):
    """Corrupt, truncated or incompatible files on disk."""
