"""Exact simulation of adiabatic and counter-diabatic charging of a qubit battery."""

__version__ = "0.1.0"

from .dynamics import Trajectory, propagate, sample_battery
from .errors import (
    ConfigError,
    ContractError,
    DegeneracyError,
    DimensionError,
    LeakageError,
    SingularDerivativeError,
    TqdBatteryError,
    TrackingError,
)
from .model import CUBE_ROOT, LINEAR, SINE, DriveConfig, Schedule
from .spectral import build_h_cd, build_h_tqd, eigenstate_derivative, frame_at
from .thermo import CostReport, ErgotropyResult, energy_cost, ergotropy, local_stability

__all__ = [
    "CUBE_ROOT",
    "ConfigError",
    "ContractError",
    "CostReport",
    "DegeneracyError",
    "DimensionError",
    "DriveConfig",
    "ErgotropyResult",
    "LINEAR",
    "LeakageError",
    "SINE",
    "Schedule",
    "SingularDerivativeError",
    "TqdBatteryError",
    "TrackingError",
    "Trajectory",
    "build_h_cd",
    "build_h_tqd",
    "eigenstate_derivative",
    "energy_cost",
    "ergotropy",
    "frame_at",
    "local_stability",
    "propagate",
    "sample_battery",
]
