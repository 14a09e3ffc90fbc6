"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
data problems exit 2, numeric failures exit 3.
"""


class ConfigError(ValueError):
    """Invalid configuration value (bad hyperparameter, unknown policy, ...)."""


class ShapeError(ValueError):
    """Tensor shape or axis mismatch."""


class UsageError(RuntimeError):
    """API misuse, e.g. backward called without a matching forward."""


class DataError(Exception):
    """Dataset-level problem: ingestion, splitting, bad labels."""


class DecodeError(DataError):
    """Unreadable or unsupported image file."""


class FormatError(DataError):
    """Malformed binary file (checkpoint or raw image)."""


class LoadError(DataError):
    """Checkpoint does not match the model it is loaded into."""


class NumericError(RuntimeError):
    """Non-finite loss or a failed gradient check."""
