"""Per-satellite blending of measured and predicted pseudoranges.

Each pseudorange and its prediction from the prior are collapsed into a
single Gaussian with matched first and second moments. A measurement that
disagrees with the prediction is pulled towards it and its variance is
inflated by the squared disagreement.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from . import _kernels
from .errors import ContractViolation, DegenerateGeometryError
from .gnss import CLOCK_BIAS, POS, CorrectedObservation
from .iekf import StateEstimate

VARIANCE_FLOOR = 1e-4  # m^2


@dataclass(frozen=True)
class MixedMeasurement:
    mean: float
    variance: float
    weight_measurement: float
    weight_prediction: float


def predicted_measurement_variance(los, covariance) -> float:
    """Project the position block of the state covariance onto the line of sight."""
    cov = np.asarray(covariance, dtype=float)
    p = cov[POS, POS]
    if np.abs(p - p.T).max() > 1e-9 * max(np.abs(p).max(), 1e-300) or np.linalg.eigvalsh(p).min() < -1e-9 * max(np.trace(p), 1e-300):
        raise ContractViolation("position covariance is not symmetric positive semi-definite")
    los = np.asarray(los, dtype=float)
    return float(los @ p @ los)


def mix(measured, var_measured, predicted, var_predicted) -> MixedMeasurement:
    if not (var_measured > 0 and var_predicted > 0):
        raise ContractViolation(
            f"variances must be positive, got {var_measured!r} and {var_predicted!r}")
    z, r, mu = _kernels.mix(
        np.array([float(measured)]),
        np.array([max(float(var_measured), VARIANCE_FLOOR)]),
        np.array([float(predicted)]),
        np.array([max(float(var_predicted), VARIANCE_FLOOR)]),
    )
    mu_a = float(mu[0])
    return MixedMeasurement(float(z[0]), float(r[0]), mu_a, 1.0 - mu_a)


def mix_epoch(observations: Sequence[CorrectedObservation], prior: StateEstimate) -> List[MixedMeasurement]:
    """Mix every satellite of an epoch against the prior, independently."""
    if not observations:
        return []
    sat_pos = np.array([o.sat_position for o in observations])
    p_r = prior.mean[POS]
    ranges, los = _kernels.ranges_los(p_r, sat_pos)
    bad = np.flatnonzero(~(ranges > 0.0))
    if bad.size:
        raise DegenerateGeometryError(
            f"{observations[bad[0]].sat_id}: receiver and satellite positions coincide")
    z_pred = ranges + prior.mean[CLOCK_BIAS]
    p = prior.covariance[POS, POS]
    r_pred = np.einsum("ij,jk,ik->i", los, p, los)
    if np.any(r_pred < 0) or not np.all(np.isfinite(r_pred)):
        raise ContractViolation("prior position covariance is not positive semi-definite")
    z_meas = np.array([o.corrected_pseudorange for o in observations])
    r_meas = np.array([o.variance for o in observations])
    if np.any(~(r_meas > 0)):
        i = int(np.flatnonzero(~(r_meas > 0))[0])
        raise ContractViolation(f"{observations[i].sat_id}: measurement variance must be positive")
    z, r, mu = _kernels.mix(z_meas, np.maximum(r_meas, VARIANCE_FLOOR), z_pred,
                            np.maximum(r_pred, VARIANCE_FLOOR))
    return [MixedMeasurement(float(z[i]), float(r[i]), float(mu[i]), 1.0 - float(mu[i]))
            for i in range(len(observations))]
