"""Synthetic GNSS scenario: static satellites, a rail vehicle and scheduled NLOS bias.

Pseudoranges are ``range + b + noise + M`` with ``M = 0`` for line-of-sight
epochs and ``M ~ U(multipath_range)`` for NLOS epochs. Doppler is not
simulated.
"""

from dataclasses import dataclass, field, fields, replace
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import BelowHorizonError, ContractViolation
from .filtering import EpochRecord, FilterConfig, FilterResult, rms, run_filter
from .frames import GeodeticPosition, ecef_to_geodetic, enu_rotation, geodetic_to_ecef
from .gnss import STATE_DIM, SatelliteObservation
from .iekf import StateEstimate
from .track import TrackMap, track_from_lonlat

SATELLITE_RANGE = 2.2e7

VARIANTS = (
    ("baseline", False, False),
    ("constraint", False, True),
    ("mixing", True, False),
    ("mixing+constraint", True, True),
)


@dataclass(frozen=True)
class SatelliteSpec:
    azimuth: float  # rad, clockwise from north
    elevation: float  # rad
    nlos_interval: Optional[Tuple[float, float]] = None  # seconds, inclusive
    sat_id: str = ""

    def is_nlos(self, t):
        return self.nlos_interval is not None and self.nlos_interval[0] <= t <= self.nlos_interval[1]


@dataclass(frozen=True)
class Features:
    mixing: bool = False
    soft_constraint: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float
    dt: float
    truth_speed: float
    origin: GeodeticPosition
    satellites: Tuple[SatelliteSpec, ...]
    los_noise_var: float = 3.0
    nlos_noise_var: float = 10.0
    multipath_range: Tuple[float, float] = (5.0, 20.0)
    clock_bias: float = 100.0
    seed: int = 0
    features: Features = field(default_factory=Features)
    cn0_los: float = 45.0
    cn0_nlos: float = 30.0
    turn_radius: Optional[float] = None  # None: straight north; >0 turn east, <0 turn west
    turn_start: float = 0.0  # along-track distance (m) where the turn begins
    track_spacing: float = 10.0
    track_margin: float = 200.0
    initial_error_scale: float = 1.0  # 0 starts the filter at the truth
    filter: FilterConfig = field(default_factory=FilterConfig)

    def __post_init__(self):
        if not self.duration > 0:
            raise ContractViolation("duration must be positive")
        if not self.dt > 0:
            raise ContractViolation("dt must be positive")
        lo, hi = self.multipath_range
        if not lo < hi:
            raise ContractViolation("multipath_range lower bound must be below the upper bound")
        if len(self.satellites) < 3:
            raise ContractViolation("at least 3 satellites are required")
        if self.los_noise_var < 0 or self.nlos_noise_var < 0:
            raise ContractViolation("noise variances must be non-negative")
        if self.initial_error_scale < 0:
            raise ContractViolation("initial_error_scale must be non-negative")

    @property
    def times(self):
        n = int(math.floor(self.duration / self.dt + 1e-9))
        return [k * self.dt for k in range(n + 1)]


def straight_scenario(seed=0, **overrides) -> ScenarioConfig:
    """Five satellites: three clear in the north-eastern sky, two western ones NLOS for the middle third.

    The angles and the (low) acceleration noise are scenario tuning, picked so
    the four variants land near the reference RMSE magnitudes.
    """
    duration = 120.0
    nlos = (duration / 3.0, 2.0 * duration / 3.0)
    deg = math.radians
    sats = (
        SatelliteSpec(deg(6.0), deg(67.1), None, "G01"),
        SatelliteSpec(deg(44.7), deg(60.8), None, "G02"),
        SatelliteSpec(deg(43.2), deg(26.4), None, "G03"),
        SatelliteSpec(deg(271.4), deg(47.4), nlos, "G04"),
        SatelliteSpec(deg(210.2), deg(77.6), nlos, "G05"),
    )
    cfg = ScenarioConfig(
        duration=duration,
        dt=1.0,
        truth_speed=10.0,
        origin=GeodeticPosition.from_degrees(50.08, 14.43, 250.0),
        satellites=sats,
        seed=seed,
        filter=FilterConfig(accel_psd=1e-4),
    )
    return replace(cfg, **overrides) if overrides else cfg


def curved_scenario(seed=0, **overrides) -> ScenarioConfig:
    """Straight-run constellation on a track that bends east, with a long NLOS window.

    The NLOS satellites are corrupted from 30 s to 120 s; the last 60 s are
    clear and show how fast each variant recovers. The turn needs a much larger
    acceleration noise than the straight run.
    """
    base = straight_scenario(seed)
    nlos = (30.0, 120.0)
    sats = tuple(s if s.nlos_interval is None else replace(s, nlos_interval=nlos) for s in base.satellites)
    cfg = replace(base, duration=180.0, satellites=sats, turn_radius=500.0, turn_start=300.0,
                  filter=FilterConfig(accel_psd=0.05))
    return replace(cfg, **overrides) if overrides else cfg


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------


def place_satellites(config: ScenarioConfig, receiver_origin=None) -> np.ndarray:
    """ECEF satellite positions at ``SATELLITE_RANGE`` along each (azimuth, elevation)."""
    g = config.origin if receiver_origin is None else receiver_origin
    if not isinstance(g, GeodeticPosition):
        g = ecef_to_geodetic(g)
    p0 = geodetic_to_ecef(g)
    rot_t = enu_rotation(g).T
    out = np.empty((len(config.satellites), 3))
    for i, s in enumerate(config.satellites):
        if not s.elevation > 0:
            raise BelowHorizonError(f"satellite {s.sat_id or i} has elevation {s.elevation!r} rad")
        ce = math.cos(s.elevation)
        enu = np.array([ce * math.sin(s.azimuth), ce * math.cos(s.azimuth), math.sin(s.elevation)])
        out[i] = p0 + SATELLITE_RANGE * (rot_t @ enu)
    return out


def _path_enu(config: ScenarioConfig, s):
    """Local ENU position and unit heading after ``s`` metres along the path."""
    R = config.turn_radius
    if R is None or s <= config.turn_start:
        return np.array([0.0, s, 0.0]), np.array([0.0, 1.0, 0.0])
    s0 = config.turn_start
    phi = (s - s0) / abs(R)
    sign = 1.0 if R > 0 else -1.0
    e = sign * abs(R) * (1.0 - math.cos(phi))
    n = s0 + abs(R) * math.sin(phi)
    return np.array([e, n, 0.0]), np.array([sign * math.sin(phi), math.cos(phi), 0.0])


def truth_state(config: ScenarioConfig, t):
    """True ECEF position and velocity at time ``t``."""
    p0 = geodetic_to_ecef(config.origin)
    rot_t = enu_rotation(config.origin).T
    enu, heading = _path_enu(config, config.truth_speed * t)
    return p0 + rot_t @ enu, config.truth_speed * (rot_t @ heading)


def track_lonlat(config: ScenarioConfig):
    """Track waypoints (lon_deg, lat_deg, h_m) along the true path, extended by ``track_margin``."""
    p0 = geodetic_to_ecef(config.origin)
    rot_t = enu_rotation(config.origin).T
    length = config.truth_speed * config.duration
    s_vals = np.arange(-config.track_margin, length + config.track_margin + 0.5 * config.track_spacing,
                       config.track_spacing)
    coords = []
    for s in s_vals:
        enu, _ = _path_enu(config, float(s))
        g = ecef_to_geodetic(p0 + rot_t @ enu)
        coords.append((math.degrees(g.longitude), math.degrees(g.latitude), g.height))
    return [coords]


def scenario_track(config: ScenarioConfig) -> TrackMap:
    return track_from_lonlat(track_lonlat(config))


# --------------------------------------------------------------------------
# measurement generation
# --------------------------------------------------------------------------


def _rngs(seed):
    obs_seq, init_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(obs_seq), np.random.default_rng(init_seq)


def simulate_epoch(t, config: ScenarioConfig, rng, sat_positions=None) -> EpochRecord:
    """One epoch of pseudoranges.

    Every epoch consumes one normal and one uniform draw per satellite, NLOS or
    not, so toggling the NLOS schedule leaves the other draws unchanged.
    """
    if not 0.0 <= t <= config.duration + 1e-9:
        raise ContractViolation(f"time {t} outside [0, {config.duration}]")
    if sat_positions is None:
        sat_positions = place_satellites(config)
    p, _ = truth_state(config, t)
    n = len(config.satellites)
    normal = rng.standard_normal(n)
    lo, hi = config.multipath_range
    uniform = rng.uniform(lo, hi, n)
    obs = []
    for i, s in enumerate(config.satellites):
        nlos = s.is_nlos(t)
        r = float(np.linalg.norm(p - sat_positions[i]))
        var = config.nlos_noise_var if nlos else config.los_noise_var
        rho = r + config.clock_bias + math.sqrt(var) * normal[i] + (uniform[i] if nlos else 0.0)
        obs.append(SatelliteObservation(
            sat_id=s.sat_id or f"S{i + 1:02d}",
            pseudorange=rho,
            cn0=config.cn0_nlos if nlos else config.cn0_los,
            sat_position=sat_positions[i],
            sat_velocity=np.zeros(3),
        ))
    return EpochRecord(time=float(t), observations=obs, truth_position=p)


def simulate(config: ScenarioConfig) -> List[EpochRecord]:
    rng, _ = _rngs(config.seed)
    sats = place_satellites(config)
    return [simulate_epoch(t, config, rng, sats) for t in config.times]


def initial_state(config: ScenarioConfig) -> StateEstimate:
    """Truth at t = 0 perturbed by the filter's initial covariance."""
    _, rng = _rngs(config.seed)
    cov = config.filter.initial_covariance()
    p, v = truth_state(config, 0.0)
    truth = np.zeros(STATE_DIM)
    truth[0:3] = p
    truth[3:6] = v
    truth[6] = config.clock_bias
    draw = rng.standard_normal(STATE_DIM)
    return StateEstimate(truth + config.initial_error_scale * np.sqrt(np.diag(cov)) * draw, cov)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


@dataclass
class ScenarioResult:
    label: str
    filter_result: FilterResult
    truth: np.ndarray
    rmse: float

    @property
    def trajectory(self):
        return self.filter_result.estimates

    @property
    def errors(self):
        return np.linalg.norm(self.filter_result.positions - self.truth, axis=1)


@dataclass
class ScenarioRun:
    """Simulated data shared by all filter variants of one seed."""

    config: ScenarioConfig
    epochs: List[EpochRecord]
    truth: np.ndarray
    initial: StateEstimate
    track: TrackMap

    def run(self, mixing: bool, constraint: bool, label: str = "") -> ScenarioResult:
        res = run_filter(self.epochs, self.initial, self.config.filter, self.track, mixing, constraint)
        err = np.linalg.norm(res.positions - self.truth, axis=1)
        return ScenarioResult(label, res, self.truth, rms(err))


def prepare(config: ScenarioConfig) -> ScenarioRun:
    epochs = simulate(config)
    truth = np.array([e.truth_position for e in epochs])
    return ScenarioRun(config, epochs, truth, initial_state(config), scenario_track(config))


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    f = config.features
    label = next(name for name, m, c in VARIANTS if (m, c) == (f.mixing, f.soft_constraint))
    return prepare(config).run(f.mixing, f.soft_constraint, label)


def run_variants(config: ScenarioConfig, variants: Sequence = VARIANTS) -> dict:
    run = prepare(config)
    return {name: run.run(m, c, name) for name, m, c in variants}


def rmse_grid(base_config: ScenarioConfig) -> np.ndarray:
    """RMSE grid: rows (with mixing, without mixing), columns (without, with constraint)."""
    r = run_variants(base_config)
    return np.array([
        [r["mixing"].rmse, r["mixing+constraint"].rmse],
        [r["baseline"].rmse, r["constraint"].rmse],
    ])


def seed_grids(base_config: ScenarioConfig, seeds: Sequence[int]):
    """Per-seed RMSE grids (n, 2, 2) over ``seeds``."""
    return np.array([rmse_grid(replace(base_config, seed=int(s))) for s in seeds])


def ordering_holds(grid) -> bool:
    """mixing+constraint < mixing < constraint < baseline."""
    g = np.asarray(grid)
    return bool(g[0, 1] < g[0, 0] < g[1, 1] < g[1, 0])


def scenario_to_dict(config: ScenarioConfig) -> dict:
    d = {f.name: getattr(config, f.name) for f in fields(config)
         if f.name not in ("origin", "satellites", "features", "filter", "multipath_range")}
    d["origin"] = {
        "latitude_deg": math.degrees(config.origin.latitude),
        "longitude_deg": math.degrees(config.origin.longitude),
        "height_m": config.origin.height,
    }
    d["satellites"] = [
        {
            "id": s.sat_id,
            "azimuth_deg": math.degrees(s.azimuth),
            "elevation_deg": math.degrees(s.elevation),
            "nlos_interval": None if s.nlos_interval is None else list(s.nlos_interval),
        }
        for s in config.satellites
    ]
    d["multipath_range"] = list(config.multipath_range)
    d["features"] = {"mixing": config.features.mixing, "soft_constraint": config.features.soft_constraint}
    d["filter"] = config.filter.to_dict()
    return d


def scenario_from_dict(d: dict) -> ScenarioConfig:
    d = dict(d)
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(d) - known
    if unknown:
        raise ContractViolation(f"unknown scenario keys: {sorted(unknown)}")
    try:
        o = d.pop("origin")
        origin = GeodeticPosition.from_degrees(o["latitude_deg"], o["longitude_deg"], o.get("height_m", 0.0))
        sats = tuple(
            SatelliteSpec(
                math.radians(s["azimuth_deg"]),
                math.radians(s["elevation_deg"]),
                None if s.get("nlos_interval") is None else tuple(float(v) for v in s["nlos_interval"]),
                str(s.get("id", "")),
            )
            for s in d.pop("satellites")
        )
    except (KeyError, TypeError) as exc:
        raise ContractViolation(f"scenario is missing a required field: {exc}") from None
    features = Features(**d.pop("features", {}) or {})
    filt = FilterConfig.from_dict(d.pop("filter", {}) or {})
    if "multipath_range" in d:
        d["multipath_range"] = tuple(float(v) for v in d["multipath_range"])
    for k in ("duration", "dt", "truth_speed", "los_noise_var", "nlos_noise_var", "clock_bias",
              "cn0_los", "cn0_nlos", "turn_start", "track_spacing", "track_margin", "initial_error_scale"):
        if k in d:
            d[k] = float(d[k])
    if d.get("turn_radius") is not None:
        d["turn_radius"] = float(d["turn_radius"])
    if "seed" in d:
        d["seed"] = int(d["seed"])
    required = {"duration", "dt", "truth_speed"} - set(d)
    if required:
        raise ContractViolation(f"scenario is missing required keys: {sorted(required)}")
    return ScenarioConfig(origin=origin, satellites=sats, features=features, filter=filt, **d)
