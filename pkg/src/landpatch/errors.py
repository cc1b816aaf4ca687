"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 3, TransferError and
OSError -> 4, anything argparse rejects -> 2.
"""


class LandpatchError(Exception):
    """Base class for all package errors."""


class DataError(LandpatchError, ValueError):
    """Invalid domain values, shapes, or dataset structure."""


class TransferError(LandpatchError, RuntimeError):
    """Network fetch failed after retries, or an upstream source is unusable."""


class TrainingError(LandpatchError, RuntimeError):
    """Training run failed (for example the loss became NaN)."""


class CheckpointError(DataError):
    """Checkpoint file is corrupt, truncated, or has an unsupported version."""


class ExportError(DataError):
    """An export cannot be produced from the given run."""
