"""Exception types raised across the simulator."""


class FedLuarError(Exception):
    pass


class ConfigurationError(FedLuarError, ValueError):
    """Bad shapes, counts or config values."""


class InputError(FedLuarError, ValueError):
    """Bad data handed to a model (e.g. out-of-range labels)."""


class GenerationError(FedLuarError, RuntimeError):
    """A randomized construction could not satisfy its constraints."""


class ProtocolError(FedLuarError, RuntimeError):
    """A client update does not cover the layers the server asked for."""


class NonFiniteError(FedLuarError, ValueError):
    """A NaN or infinity was about to be written out."""
