"""GNSS rail-vehicle localization with an iterated EKF, pseudorange mixing and track constraints."""

from ._kernels import BACKEND
from .errors import (
    ContractViolation,
    DegenerateGeometryError,
    NumericalFailure,
    RailGnssError,
    SingularMatrixError,
)
from .frames import GeodeticPosition, ecef_to_geodetic, geodetic_to_ecef
from .iekf import IekfConfig, MeasurementBlock, StateEstimate, TransitionModel, iekf_update, predict
from .track import SoftConstraintConfig, TrackMap, build_index

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ContractViolation",
    "DegenerateGeometryError",
    "GeodeticPosition",
    "IekfConfig",
    "MeasurementBlock",
    "NumericalFailure",
    "RailGnssError",
    "SingularMatrixError",
    "SoftConstraintConfig",
    "StateEstimate",
    "TrackMap",
    "TransitionModel",
    "build_index",
    "ecef_to_geodetic",
    "geodetic_to_ecef",
    "iekf_update",
    "predict",
]
