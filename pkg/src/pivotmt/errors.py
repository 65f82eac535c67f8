"""Exception types shared across the package."""


class PivotMtError(Exception):
    """Base class for package errors."""


class ShapeError(PivotMtError):
    """Operand shapes do not conform for an operation."""


class DegenerateVectorError(PivotMtError):
    """A vector with norm below the normalization threshold was produced."""


class ContractError(PivotMtError):
    """An API precondition was violated by the caller."""


class ConfigError(PivotMtError):
    """Invalid configuration value or combination (CLI exit code 2)."""


class FormatError(PivotMtError):
    """Malformed input file (CLI exit code 2)."""


class EmptySentenceError(FormatError):
    """Text with no tokens where a sentence is required."""


class CompatibilityError(PivotMtError):
    """Artifacts do not belong together, e.g. vocab hash mismatch (exit code 3)."""


class UnsupportedModeError(PivotMtError):
    """Operation requires a model capability the checkpoint does not have."""


class NonFiniteGradientError(PivotMtError):
    """A gradient tensor contained NaN or infinity; named in the message."""


class TrainingDivergedError(PivotMtError):
    """Training loss became non-finite; carries the last good state."""

    def __init__(self, message, snapshot=None, log_rows=None):
        super().__init__(message)
        self.snapshot = snapshot
        self.log_rows = log_rows
