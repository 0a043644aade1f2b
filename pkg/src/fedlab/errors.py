"""Exception types shared across the package."""


class FedlabError(Exception):
    """Base class for all package errors."""


class WindowError(FedlabError, ValueError):
    """An operator window does not fit the requested interval."""


class NotHermitianError(FedlabError, ValueError):
    pass


class DimensionError(FedlabError, ValueError):
    """Requested Hilbert-space dimension exceeds the configured cap."""

    def __init__(self, message: str, n: int | None = None):
        super().__init__(message)
        self.n = n


class SupportError(FedlabError, ValueError):
    """A density is singular where a strictly positive one is required."""


class InvalidModelError(FedlabError, ValueError):
    pass


class ExtrapolationError(FedlabError, ValueError):
    pass


class ConfigError(FedlabError, ValueError):
    pass
