"""Exception hierarchy shared by every pairdisc module."""
from typing import Optional


class PairDiscError(Exception):
    """Base class for all pairdisc errors."""


class ShapeError(PairDiscError, ValueError):
    """Raised when tensor shapes are inconsistent."""


class NonFiniteError(PairDiscError, ArithmeticError):
    """Raised when a NaN or Inf appears in a tensor."""


class DataError(PairDiscError, ValueError):
    """Raised for unreadable or malformed input data."""


class ConfigError(PairDiscError, ValueError):
    """Raised for invalid configuration text or values."""


class CheckpointError(PairDiscError):
    """Raised when a checkpoint cannot be read or does not match."""


class NonDeterministicLossError(PairDiscError):
    """Raised when a loss function returns different values for the same parameters."""


class DivergenceError(PairDiscError, ArithmeticError):
    """Raised when training produces a non-finite loss or gradient."""

    def __init__(self, message: str, last_checkpoint: Optional[str] = None):
        if last_checkpoint:
            message = f"{message} (last good checkpoint: {last_checkpoint})"
        super().__init__(message)
        self.last_checkpoint = last_checkpoint
