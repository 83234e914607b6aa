"""Exception hierarchy shared by all estimators."""


class MultimeanError(Exception):
    """Base class for every error raised by the package."""


class InvalidBag(MultimeanError):
    pass


class DimensionMismatch(MultimeanError):
    pass


class DegenerateCovariance(MultimeanError):
    pass


class InsufficientSamples(MultimeanError):
    pass


class BlockTooSmall(MultimeanError):
    pass


class DegenerateSpectrum(MultimeanError):
    """Raised when the Schatten-2 estimate vanishes and a ratio by it is needed."""


class InvalidDimension(MultimeanError):
    pass


class InvalidArgument(MultimeanError, ValueError):
    pass


class SolveFailure(MultimeanError):
    pass


class ConfigError(MultimeanError):
    """Experiment configuration could not be parsed or validated."""
