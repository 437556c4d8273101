"""Exception hierarchy."""


class PowerEnhanceError(Exception):
    """Base class for all package errors."""


class PanelError(PowerEnhanceError, ValueError):
    """Malformed or unusable panel input (parse failures, bad labels, overlap)."""


class EstimationError(PowerEnhanceError, ValueError):
    """A model could not be estimated from the supplied data."""


class NotPositiveDefiniteError(EstimationError):
    """No threshold constant on the grid produced a positive definite estimate."""

    def __init__(self, message, min_eigen=None, c_max=None):
        super().__init__(message)
        self.min_eigen = min_eigen
        self.c_max = c_max


class ConfigError(PowerEnhanceError, ValueError):
    """Invalid experiment or CLI configuration."""
