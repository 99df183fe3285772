"""Epoch-by-epoch GNSS filter: predict, optional mixing, optional track constraint, IEKF update."""

from dataclasses import dataclass, field, fields, replace
import math
from typing import List, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ContractViolation, NumericalFailure
from .gnss import (
    CLOCK_BIAS,
    CLOCK_DRIFT,
    POS,
    STATE_DIM,
    VEL,
    SatelliteObservation,
    correct_observations,
)
from .iekf import (
    IekfConfig,
    MeasurementBlock,
    StateEstimate,
    TransitionModel,
    UpdateDiagnostics,
    iekf_update,
    predict,
)
from .mixing import mix_epoch
from .track import SoftConstraintConfig, TrackMap, soft_constraint_measurement


@dataclass
class EpochRecord:
    time: float
    observations: List[SatelliteObservation]
    truth_position: Optional[np.ndarray] = None


@dataclass(frozen=True)
class FilterConfig:
    """Tuning of the GNSS filter. PSDs in m^2/s^3 (m^2/s for ``clock_bias_psd``)."""

    accel_psd: float = 0.01
    clock_drift_psd: float = 0.01
    clock_bias_psd: float = 0.0
    init_position_sigma: float = 10.0
    init_velocity_sigma: float = 1.0
    init_clock_bias_sigma: float = 100.0
    init_clock_drift_sigma: float = 1.0
    iekf: IekfConfig = field(default_factory=IekfConfig)
    constraint: SoftConstraintConfig = field(default_factory=SoftConstraintConfig)

    def initial_covariance(self):
        return np.diag([self.init_position_sigma**2] * 3 + [self.init_velocity_sigma**2] * 3
                       + [self.init_clock_bias_sigma**2, self.init_clock_drift_sigma**2])

    def transition(self, dt):
        return TransitionModel.constant_velocity(dt, self.accel_psd, self.clock_drift_psd, self.clock_bias_psd)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("iekf", "constraint")}
        out["iekf"] = {f.name: getattr(self.iekf, f.name) for f in fields(self.iekf)}
        out["constraint"] = {f.name: getattr(self.constraint, f.name) for f in fields(self.constraint)}
        return out

    @classmethod
    def from_dict(cls, d, base=None):
        base = base or cls()
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractViolation(f"unknown filter settings: {sorted(unknown)}")
        iekf = replace(base.iekf, **d.pop("iekf", {}) or {})
        constraint = replace(base.constraint, **d.pop("constraint", {}) or {})
        return replace(base, iekf=iekf, constraint=constraint, **{k: float(v) for k, v in d.items()})


@dataclass
class FilterResult:
    times: List[float]
    estimates: List[StateEstimate]
    diagnostics: List[UpdateDiagnostics]
    constraint_active: List[bool]

    @property
    def positions(self):
        return np.array([e.mean[POS] for e in self.estimates])


def pseudorange_block(sat_positions, values, variances, label="pseudorange") -> MeasurementBlock:
    sat_positions = np.ascontiguousarray(sat_positions, dtype=float)

    def predictor(x):
        ranges, _ = _kernels.ranges_los(x[POS], sat_positions)
        return ranges + x[CLOCK_BIAS]

    def jacobian(x):
        _, los = _kernels.ranges_los(x[POS], sat_positions)
        jac = np.zeros((sat_positions.shape[0], STATE_DIM))
        jac[:, POS] = los
        jac[:, CLOCK_BIAS] = 1.0
        return jac

    return MeasurementBlock(values, np.diag(variances), predictor, jacobian, label=label)


def doppler_block(sat_positions, sat_velocities, values, variances, label="doppler") -> MeasurementBlock:
    sat_positions = np.ascontiguousarray(sat_positions, dtype=float)
    sat_velocities = np.asarray(sat_velocities, dtype=float)

    def predictor(x):
        _, los = _kernels.ranges_los(x[POS], sat_positions)
        return np.einsum("ij,ij->i", sat_velocities - x[VEL], los) + x[CLOCK_DRIFT]

    def jacobian(x):
        ranges, los = _kernels.ranges_los(x[POS], sat_positions)
        dv = sat_velocities - x[VEL]
        along = np.einsum("ij,ij->i", los, dv)
        jac = np.zeros((sat_positions.shape[0], STATE_DIM))
        jac[:, POS] = (dv - los * along[:, None]) / ranges[:, None]
        jac[:, VEL] = -los
        jac[:, CLOCK_DRIFT] = 1.0
        return jac

    return MeasurementBlock(values, np.diag(variances), predictor, jacobian, label=label)


def gnss_blocks(observations, prior: StateEstimate, mixing: bool, doppler_variance: float = 0.01):
    """Measurement blocks for one epoch (pseudoranges, plus Doppler when present)."""
    corrected = correct_observations(observations, prior.mean[POS])
    if not corrected:
        return []
    sat_pos = np.array([c.sat_position for c in corrected])
    if mixing:
        mixed = mix_epoch(corrected, prior)
        values = np.array([m.mean for m in mixed])
        variances = np.array([m.variance for m in mixed])
    else:
        values = np.array([c.corrected_pseudorange for c in corrected])
        variances = np.array([c.variance for c in corrected])
    blocks = [pseudorange_block(sat_pos, values, variances)]
    rr = np.array([c.range_rate for c in corrected])
    have = np.isfinite(rr)
    if have.any():
        sat_vel = np.array([c.sat_velocity for c in corrected])
        blocks.append(doppler_block(sat_pos[have], sat_vel[have], rr[have],
                                    np.full(int(have.sum()), doppler_variance)))
    return blocks


def least_squares_fix(observations: Sequence[SatelliteObservation], iterations=10) -> np.ndarray:
    """Unweighted single-epoch position and clock-bias fix (Gauss-Newton from the geocentre)."""
    if len(observations) < 4:
        raise ContractViolation("a single-epoch fix needs at least 4 satellites")
    from .gnss import corrected_pseudorange

    sat_pos = np.array([o.sat_position for o in observations])
    rho = np.array([corrected_pseudorange(o) for o in observations])
    x = np.zeros(4)
    for _ in range(iterations):
        ranges, los = _kernels.ranges_los(x[:3], sat_pos)
        H = np.hstack([los, np.ones((len(rho), 1))])
        dx, *_ = np.linalg.lstsq(H, rho - ranges - x[3], rcond=None)
        x = x + dx
        if np.linalg.norm(dx) < 1e-6:
            break
    return x


def initial_state_from_fix(epoch: EpochRecord, config: FilterConfig) -> StateEstimate:
    fix = least_squares_fix(epoch.observations)
    mean = np.zeros(STATE_DIM)
    mean[POS] = fix[:3]
    mean[CLOCK_BIAS] = fix[3]
    return StateEstimate(mean, config.initial_covariance())


def run_filter(epochs: Sequence[EpochRecord], initial: StateEstimate, config: FilterConfig,
               track: Optional[TrackMap] = None, mixing: bool = False, constraint: bool = False) -> FilterResult:
    """Run the filter over ``epochs``; the first epoch is updated without a prediction."""
    if constraint and track is None:
        raise ContractViolation("the track constraint needs a track map")
    result = FilterResult([], [], [], [])
    est = initial
    t_prev = None
    for k, epoch in enumerate(epochs):
        try:
            if t_prev is not None:
                dt = epoch.time - t_prev
                if not dt >= 0:
                    raise ContractViolation(f"epoch times must be non-decreasing (dt = {dt})")
                if dt > 0:
                    est = predict(est, config.transition(dt))
            blocks = gnss_blocks(epoch.observations, est, mixing)
            active = False
            if constraint:
                b = soft_constraint_measurement(est, track, config.constraint)
                if b is not None:
                    blocks.append(b)
                    active = True
            if blocks:
                est, diag = iekf_update(est, blocks, config.iekf)
            else:
                diag = UpdateDiagnostics(converged=True, cost=0.0)
        except NumericalFailure as exc:
            exc.epoch = k
            raise
        t_prev = epoch.time
        result.times.append(epoch.time)
        result.estimates.append(est)
        result.diagnostics.append(diag)
        result.constraint_active.append(active)
    return result


def rms(values) -> float:
    v = np.asarray(values, dtype=float)
    return math.sqrt(float(np.mean(v * v))) if v.size else math.nan
