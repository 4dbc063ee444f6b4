"""Exception types raised across the package."""


class TqdBatteryError(Exception):
    """Base class for all package errors."""


class ContractError(TqdBatteryError, ValueError):
    """An input violates a documented precondition (non-Hermitian, not a density matrix, ...)."""


class DimensionError(TqdBatteryError, ValueError):
    pass


class LeakageError(TqdBatteryError):
    """A state or operator has weight outside the one-excitation sector."""


class SingularDerivativeError(TqdBatteryError):
    """A schedule derivative is unbounded at the requested time."""


class DegeneracyError(TqdBatteryError):
    """Two levels of the working space are closer than the gap tolerance."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class TrackingError(TqdBatteryError):
    """Eigenvectors of consecutive frames could not be matched unambiguously."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class ConfigError(TqdBatteryError, ValueError):
    """Bad scenario configuration (unknown key, invalid range, ...)."""
