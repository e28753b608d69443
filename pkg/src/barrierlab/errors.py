"""Exception types raised by barrierlab."""


class BarrierLabError(Exception):
    """Base class for all library errors."""


class ConfigError(BarrierLabError, ValueError):
    """Invalid configuration, shape mismatch, or empty input.

    ``field`` names the offending configuration key when there is one.
    """

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class LifecycleError(BarrierLabError):
    """Operation attempted on a node that is not live."""


class MembershipError(BarrierLabError):
    """A barrier check was handed an empty view of the population."""
