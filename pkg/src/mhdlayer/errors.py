"""Exception hierarchy shared by all modules."""


class MhdLayerError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(MhdLayerError, ValueError):
    """Invalid user-facing configuration (bad dimensions, unknown keys, ...)."""


class DomainError(MhdLayerError, ValueError):
    """A parameter lies outside the range where the mathematics is defined."""


class PreconditionError(MhdLayerError, ValueError):
    """An operation was called on inputs that violate its contract."""


class InstabilityError(MhdLayerError, RuntimeError):
    """The time integrator produced non-finite or runaway values."""


class CFLError(MhdLayerError, RuntimeError):
    """The requested time step exceeds the advective stability limit."""
