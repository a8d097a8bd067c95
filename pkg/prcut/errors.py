"""Exception hierarchy shared by the toolkit.

`ValidationError` subclasses map to CLI exit code 1, `NumericalError`
subclasses to exit code 2.
"""
from __future__ import annotations

from typing import Any, Optional


class PrcutError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(PrcutError):
    """Input, shape or configuration problem."""


class GraphError(ValidationError):
    pass


class KernelError(ValidationError):
    pass


class PartitionError(ValidationError):
    pass


class ProfileError(ValidationError):
    """Bernoulli profile or method choice out of range."""


class QuadratureError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DataFormatError(ValidationError):
    pass


class IdxMagicError(DataFormatError):
    pass


class IdxTruncatedError(DataFormatError):
    pass


class IdxCountMismatchError(DataFormatError):
    pass


class CsvFormatError(DataFormatError):
    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


class EmbeddingFormatError(DataFormatError):
    pass


class NumericalError(PrcutError):
    """A computation produced an unusable result."""


class CollapseError(NumericalError):
    """A cluster mass fell below the floor: assignments collapsed."""


class NonFiniteError(NumericalError):
    pass


class EigenSolverError(NumericalError):
    pass


class TrainingAborted(NumericalError):
    """Training stopped early; `history` holds the steps that completed."""

    def __init__(self, message: str, history: Any = None, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.history = history
        self.cause = cause
