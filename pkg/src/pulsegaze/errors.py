"""Exception hierarchy.

Everything raised on purpose by the library derives from ``PulseGazeError``.
``ConfigError`` subclasses signal bad parameters or configuration (CLI exit
code 2); every other subclass is a data/computation error (exit code 3).
"""


class PulseGazeError(Exception):
    """Base class for library errors."""


class ConfigError(PulseGazeError):
    """Invalid parameters or configuration."""


class InvalidConfig(ConfigError):
    pass


class InvalidBand(ConfigError):
    pass


class RoiOutOfBounds(PulseGazeError):
    pass


class EmptyInput(PulseGazeError):
    pass


class MixedDimensions(PulseGazeError):
    pass


class ZeroVariance(PulseGazeError):
    pass


class TooShort(PulseGazeError):
    pass


class TraceTooShort(TooShort):
    pass


class EmptyBand(PulseGazeError):
    pass


class NoAdequatePeak(PulseGazeError):
    pass


class SingularCovariance(PulseGazeError):
    pass


class NoConvergence(PulseGazeError):
    """FastICA hit its iteration cap.

    The last iterate is kept on ``partial`` so callers can decide whether a
    not-quite-converged unmixing is still usable.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NoPulseComponent(PulseGazeError):
    pass


class ZeroMeanChannel(PulseGazeError):
    pass


class AllWindowsFailed(PulseGazeError):
    pass


class TooFewImages(PulseGazeError):
    pass


class KTooLarge(PulseGazeError):
    pass


class DegenerateData(PulseGazeError):
    pass


class DegenerateClass(PulseGazeError):
    pass


class NonFiniteLoss(PulseGazeError):
    pass


class FormatError(PulseGazeError):
    """A file on disk does not match the expected format."""
