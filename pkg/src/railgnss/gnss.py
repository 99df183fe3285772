"""Pseudorange and Doppler observation models, corrections and weighting."""

from dataclasses import dataclass
import math
from typing import Optional, Tuple

import numpy as np

from . import _kernels
from .errors import (
    BelowHorizonError,
    ContractViolation,
    DegenerateFrequencyError,
    DegenerateGeometryError,
)
from .frames import ecef_to_geodetic, enu_rotation

SPEED_OF_LIGHT = 299792458.0

# weighting model constants (dB-Hz, dB-Hz, m^2, dB)
CN0_THRESHOLD = 50.0
CN0_FLOOR = 10.0
CN0_FLOOR_VARIANCE = 30.0
CN0_SLOPE = 40.0

SAT_RADIUS_BAND = (2.0e7, 4.5e7)

# state layout
POS = slice(0, 3)
VEL = slice(3, 6)
CLOCK_BIAS = 6
CLOCK_DRIFT = 7
STATE_DIM = 8


@dataclass
class SatelliteObservation:
    """One satellite's data at one epoch.

    ``doppler_range_rate`` uses the same sign as :func:`doppler_predict`.
    ``sat_clock_offset`` is the broadcast clock offset in seconds; the
    relativistic part is added by :func:`correct_observation`.
    """

    sat_id: str
    pseudorange: float
    cn0: float
    sat_position: np.ndarray
    sat_velocity: np.ndarray
    sat_clock_offset: float = 0.0
    doppler_range_rate: Optional[float] = None
    second_freq_pseudorange: Optional[float] = None
    freq_pair: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.sat_position = np.asarray(self.sat_position, dtype=float).reshape(3)
        self.sat_velocity = np.asarray(self.sat_velocity, dtype=float).reshape(3)
        if not (self.pseudorange > 0 and math.isfinite(self.pseudorange)):
            raise ContractViolation(f"{self.sat_id}: pseudorange must be positive, got {self.pseudorange!r}")
        r = float(np.linalg.norm(self.sat_position))
        if not SAT_RADIUS_BAND[0] <= r <= SAT_RADIUS_BAND[1]:
            raise ContractViolation(f"{self.sat_id}: satellite radius {r:.0f} m outside {SAT_RADIUS_BAND}")
        if not 0.0 <= self.cn0 <= 60.0:
            raise ContractViolation(f"{self.sat_id}: CN0 {self.cn0!r} dB-Hz outside [0, 60]")
        if (self.second_freq_pseudorange is None) != (self.freq_pair is None):
            raise ContractViolation(f"{self.sat_id}: second-frequency pseudorange needs freq_pair and vice versa")


@dataclass
class CorrectedObservation:
    """Pseudorange with deterministic errors removed, plus its weighting.

    Carries the satellite state so that the measurement can be predicted from
    any receiver state later on.
    """

    sat_id: str
    corrected_pseudorange: float
    range_rate: float  # nan when no Doppler was measured
    variance: float
    elevation: float
    line_of_sight: np.ndarray
    sat_position: np.ndarray
    sat_velocity: np.ndarray


def _sat_position(sat):
    return np.asarray(getattr(sat, "sat_position", sat), dtype=float)


def line_of_sight(p_r, p_sat) -> np.ndarray:
    """Unit vector pointing from the satellite towards the receiver."""
    d = np.asarray(p_r, dtype=float) - np.asarray(p_sat, dtype=float)
    n = math.sqrt(float(d @ d))
    if n == 0.0:
        raise DegenerateGeometryError("receiver and satellite positions coincide")
    return d / n


def relativistic_clock_correction(p_sat, v_sat) -> float:
    """Relativistic satellite clock term in seconds."""
    return -2.0 * float(np.dot(p_sat, v_sat)) / SPEED_OF_LIGHT**2


def iono_free_pseudorange(rho1, rho2, f1, f2) -> float:
    if not (f1 > 0 and f2 > 0):
        raise ContractViolation("carrier frequencies must be positive")
    if f1 == f2:
        raise DegenerateFrequencyError("iono-free combination needs two distinct frequencies")
    return (f1 * f1 * rho1 - f2 * f2 * rho2) / (f1 * f1 - f2 * f2)


def pseudorange_predict(state, sat) -> float:
    x = np.asarray(state, dtype=float)
    d = x[POS] - _sat_position(sat)
    r = math.sqrt(float(d @ d))
    if r == 0.0:
        raise DegenerateGeometryError("receiver and satellite positions coincide")
    return r + x[CLOCK_BIAS]


def pseudorange_jacobian_row(state, sat) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    row = np.zeros(STATE_DIM)
    row[POS] = line_of_sight(x[POS], _sat_position(sat))
    row[CLOCK_BIAS] = 1.0
    return row


def doppler_predict(state, sat) -> float:
    """Predicted range-rate ``(v_sat - v_r) . L + clock drift`` in m/s."""
    x = np.asarray(state, dtype=float)
    los = line_of_sight(x[POS], _sat_position(sat))
    return float((np.asarray(sat.sat_velocity, dtype=float) - x[VEL]) @ los) + x[CLOCK_DRIFT]


def doppler_jacobian_row(state, sat) -> np.ndarray:
    """Exact derivative of :func:`doppler_predict` with respect to the state.

    The velocity block is ``-L`` (the receiver velocity enters with a minus
    sign). The position block is the small line-of-sight rotation term
    ``(I - L L^T)(v_sat - v_r) / r``, of order 1e-4 at GNSS ranges.
    """
    x = np.asarray(state, dtype=float)
    d = x[POS] - _sat_position(sat)
    r = math.sqrt(float(d @ d))
    if r == 0.0:
        raise DegenerateGeometryError("receiver and satellite positions coincide")
    los = d / r
    dv = np.asarray(sat.sat_velocity, dtype=float) - x[VEL]
    row = np.zeros(STATE_DIM)
    row[POS] = (dv - los * float(los @ dv)) / r
    row[VEL] = -los
    row[CLOCK_DRIFT] = 1.0
    return row


def measurement_variance(cn0, elevation) -> float:
    """Pseudorange variance in m^2 from carrier-to-noise density and elevation."""
    if not elevation > 0.0:
        raise BelowHorizonError(f"elevation {elevation!r} rad is not above the horizon")
    if not math.isfinite(cn0):
        raise ContractViolation("CN0 must be finite")
    u = cn0 - CN0_THRESHOLD
    knee = CN0_FLOOR_VARIANCE / 10.0 ** (-(CN0_FLOOR - CN0_THRESHOLD) / CN0_SLOPE)
    num = 10.0 ** (-u / CN0_SLOPE) * ((knee - 1.0) * u / (CN0_FLOOR - CN0_THRESHOLD) + 1.0)
    return num / math.sin(elevation) ** 2


def elevation_angle(p_r, p_sat) -> float:
    """Elevation of the satellite above the geodetic horizon at ``p_r``."""
    return float(elevations(p_r, np.asarray(p_sat, dtype=float)[None, :])[0])


def elevations(p_r, sat_positions) -> np.ndarray:
    """Vectorised :func:`elevation_angle` for an (n, 3) array of satellites."""
    p_r = np.asarray(p_r, dtype=float)
    up = enu_rotation(ecef_to_geodetic(p_r))[2]
    diff = np.asarray(sat_positions, dtype=float) - p_r
    n = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if np.any(n == 0.0):
        raise DegenerateGeometryError("receiver and satellite positions coincide")
    return np.arcsin(np.clip(diff @ up / n, -1.0, 1.0))


def corrected_pseudorange(obs: SatelliteObservation) -> float:
    """Pseudorange with satellite clock (incl. relativistic) and ionosphere removed."""
    rho = obs.pseudorange
    if obs.second_freq_pseudorange is not None:
        rho = iono_free_pseudorange(rho, obs.second_freq_pseudorange, *obs.freq_pair)
    dt_sat = obs.sat_clock_offset + relativistic_clock_correction(obs.sat_position, obs.sat_velocity)
    return rho + SPEED_OF_LIGHT * dt_sat


def correct_observations(observations, receiver_position) -> list:
    """Correct a whole epoch; elevation and line of sight use ``receiver_position``."""
    if not observations:
        return []
    p_r = np.asarray(receiver_position, dtype=float)
    sat_pos = np.array([o.sat_position for o in observations])
    elev = elevations(p_r, sat_pos)
    _, los = _kernels.ranges_los(p_r, sat_pos)
    out = []
    for i, obs in enumerate(observations):
        try:
            var = measurement_variance(obs.cn0, float(elev[i]))
        except BelowHorizonError as exc:
            raise BelowHorizonError(f"{obs.sat_id}: {exc}") from None
        rr = obs.doppler_range_rate
        out.append(CorrectedObservation(
            sat_id=obs.sat_id,
            corrected_pseudorange=corrected_pseudorange(obs),
            range_rate=math.nan if rr is None else float(rr),
            variance=var,
            elevation=float(elev[i]),
            line_of_sight=los[i],
            sat_position=obs.sat_position,
            sat_velocity=obs.sat_velocity,
        ))
    return out


def correct_observation(obs: SatelliteObservation, receiver_position) -> CorrectedObservation:
    return correct_observations([obs], receiver_position)[0]
