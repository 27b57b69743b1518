"""Exception hierarchy for attnhar.

Argument errors are raised as plain ``ValueError``. Everything else derives from
``AttnHarError`` so the CLI can map failures to its stable exit codes:

- ``ConfigError`` -> 2
- ``DataError`` (and ``OSError``) -> 3
- ``NumericError`` -> 4
"""

from typing import Optional, Tuple


class AttnHarError(Exception):
    """Base class for all attnhar errors."""


class ShapeError(AttnHarError, ValueError):
    """Two operands have incompatible shapes.

    Attributes:
        left: Shape of the first operand.
        right: Shape of the second operand.
    """

    def __init__(self, message: str, left: Tuple[int, ...], right: Tuple[int, ...]) -> None:
        super().__init__(f"{message}: {tuple(left)} vs {tuple(right)}")
        self.left = tuple(left)
        self.right = tuple(right)


class NumericError(AttnHarError, ArithmeticError):
    """A NaN or infinity showed up where finite values are required."""


class TrainingError(NumericError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message: str, epoch: int, batch: int) -> None:
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch


class ConfigError(AttnHarError, ValueError):
    """Invalid run or model configuration."""

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
        self.message = message


class DataError(AttnHarError):
    """Input data cannot be used."""


class ParseError(DataError):
    """A CSV or manifest file is malformed."""

    def __init__(self, message: str, path: str, line: int) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class CheckpointError(DataError):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    """Not a checkpoint file (bad magic bytes or undecodable header)."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint file ends before the declared content."""


class CheckpointShapeError(CheckpointError):
    """Checkpoint tensors do not fit the expected model dimensions."""


class CacheError(AttnHarError, RuntimeError):
    """Backward pass called with a cache from a different forward pass."""
