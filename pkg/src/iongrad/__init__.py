"""Simulator for light-shift geometric-phase gates on linear ion crystals
driven by transverse structured-light gradients."""

from iongrad.errors import (
    CalibrationError,
    ConfigError,
    FitError,
    IongradError,
    ModelInconsistencyError,
    PhysicsError,
    SolverError,
    StructuralInstabilityError,
    TruncationError,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ConfigError",
    "FitError",
    "IongradError",
    "ModelInconsistencyError",
    "PhysicsError",
    "SolverError",
    "StructuralInstabilityError",
    "TruncationError",
]
