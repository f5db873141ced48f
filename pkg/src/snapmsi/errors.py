"""Exception hierarchy.

The CLI maps these onto exit codes: ``FormatError`` -> 3,
``NumericalError`` -> 4, everything else derived from ``SnapMsiError`` -> 2.
"""


class SnapMsiError(Exception):
    """Base class for all package errors."""


class DimensionError(SnapMsiError, ValueError):
    """Shapes, grids or filter counts do not agree."""


class ConfigError(SnapMsiError, ValueError):
    """A parameter or configuration is outside its valid domain."""


class FormatError(SnapMsiError, ValueError):
    """A file on disk is malformed."""


class NumericalError(SnapMsiError, ArithmeticError):
    """A solver diverged, hit a singular system, or produced non-finite values."""


class StageError(SnapMsiError):
    """Wraps a failure inside one stage of an experiment pipeline."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
