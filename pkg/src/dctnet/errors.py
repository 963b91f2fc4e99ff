"""Exception hierarchy shared by all dctnet modules."""


class DCTNetError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DCTNetError):
    """Invalid configuration or parameter value (bad extents, p >= 1, ...)."""


class ContractError(DCTNetError):
    """An operation was called with arguments violating its contract."""


class DataError(DCTNetError):
    """Malformed or insufficient input data (CSV cells, short splits, ...)."""


class CheckpointError(DCTNetError):
    """Unreadable, truncated, or incompatible checkpoint file."""


class TrainingError(DCTNetError):
    """Training diverged or otherwise failed mid-run."""


class SingularityError(DCTNetError):
    """A non-invertible affine map was asked to invert itself."""
