"""Exception types shared across the package."""


class DoseboundError(Exception):
    """Base class for all package errors."""


class InputError(DoseboundError, ValueError):
    """Invalid user input: bad shapes, non-finite values, empty data."""


class NumericError(DoseboundError, RuntimeError):
    """A computation produced non-finite or degenerate results."""


class TrainingDivergedError(NumericError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training loss became non-finite at epoch {epoch}")


class SupportViolationError(NumericError):
    """Reference density vanishes where the nominal density has mass."""


class DegenerateDistributionError(NumericError):
    """Distribution has no spread, so a width ratio is undefined."""
