"""Exception hierarchy.

Every error raised by the package derives from :class:`TrawlError`.  The
subclasses of :class:`ModelError` signal invalid parameters or data; the CLI maps
them to exit code 2.  :class:`NotConverged` maps to exit code 3.
"""


class TrawlError(Exception):
    """Base class for all package errors."""


class ModelError(TrawlError, ValueError):
    """Invalid model parameters or observed data."""


class EmptySupport(ModelError):
    pass


class ZeroMark(ModelError):
    pass


class NonPositiveMass(ModelError):
    pass


class NonPositivePhi(ModelError):
    pass


class InvalidPath(ModelError):
    """A jump path violates ordering, horizon or size constraints."""


class NegativePathValue(ModelError):
    """The observed path drops below zero where non-negativity is required."""


class UnreachableInitialValue(ModelError):
    """The initial value has (numerically) zero probability under the model."""


class ZeroIntensityJump(ModelError):
    """An observed jump has zero conditional intensity under the model."""


class TruncationError(ModelError):
    """Too much probability mass was lost to pruning or to the count cap."""


class InconsistentSupport(ModelError):
    """A smoothing distribution puts mass where the filter has none."""


class DegenerateData(ModelError):
    """The statistics do not identify the parameters (e.g. zero time at risk)."""


class TooManyJumps(ModelError):
    pass


class StateSpaceOverflow(ModelError):
    pass


class NotConverged(TrawlError):
    """An iterative estimator stopped without meeting its criterion.

    The best iterate found is available as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(ModelError):
    """A model configuration or data file cannot be parsed."""
