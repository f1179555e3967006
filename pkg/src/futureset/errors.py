"""Exception types shared across the package."""


class FuturesetError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(FuturesetError):
    """Tensor shapes are incompatible for the requested operation."""


class UsageError(FuturesetError):
    """An operation was called outside its contract (bad argument, bad state)."""


class ConfigError(FuturesetError):
    """Invalid or inconsistent run configuration. CLI exit code 2."""


class DataFormatError(FuturesetError):
    """A dataset or checkpoint file is malformed. Carries file/line context."""


class NumericalError(FuturesetError):
    """Non-finite values reached a point where they must not be. CLI exit code 3."""
