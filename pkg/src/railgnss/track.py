"""Track map: waypoint polylines, a uniform-grid index and the soft constraint.

Segment geometry is stored relative to a local origin near the map centre so
that projections keep sub-nanometre precision instead of the ~1e-9 m ulp of
raw ECEF coordinates.
"""

from dataclasses import dataclass
import math
from typing import List, Optional, Sequence
import warnings

import numpy as np

from . import _kernels
from .errors import ContractViolation, EmptyMapError
from .frames import GeodeticPosition, ecef_to_geodetic, enu_rotation, geodetic_to_ecef
from .gnss import POS, STATE_DIM
from .iekf import MeasurementBlock, StateEstimate

MIN_SEGMENT_LENGTH = 1e-3
DEFAULT_CELL_SIZE = 50.0


@dataclass(frozen=True)
class SoftConstraintConfig:
    cross_track_sigma: float = 2.0
    along_track_sigma: float = 50.0
    vertical_sigma: float = 5.0
    search_radius: float = 100.0
    enabled: bool = True
    reproject_each_iteration: bool = False

    def __post_init__(self):
        for name in ("cross_track_sigma", "along_track_sigma", "vertical_sigma", "search_radius"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")


@dataclass(frozen=True)
class Projection:
    projected_point: np.ndarray
    segment_id: int
    along_track_unit: np.ndarray
    distance: float
    t: float  # position along the segment, 0 at its start and 1 at its end


@dataclass(frozen=True, eq=False)
class TrackMap:
    polylines: tuple  # ECEF waypoint arrays, one (k, 3) array per polyline
    origin: np.ndarray
    starts: np.ndarray  # (S, 3) local
    ends: np.ndarray  # (S, 3) local
    polyline_index: np.ndarray  # (S,) owning polyline of each segment
    cell_size: float
    grid_origin: np.ndarray
    dims: np.ndarray
    keys: np.ndarray  # sorted occupied cell keys
    offsets: np.ndarray  # CSR offsets into seg_ids, len(keys) + 1
    seg_ids: np.ndarray

    @property
    def n_segments(self):
        return self.starts.shape[0]

    def to_local(self, points):
        return np.asarray(points, dtype=float) - self.origin

    def segment_ecef(self, s):
        return self.starts[s] + self.origin, self.ends[s] + self.origin

    def cells_of(self, s):
        """Grid cell keys a segment is registered in (for inspection and tests)."""
        pos = np.flatnonzero(self.seg_ids == s)
        owner = np.searchsorted(self.offsets, pos, side="right") - 1
        return self.keys[owner]


def build_index(polylines: Sequence, cell_size: float = DEFAULT_CELL_SIZE) -> TrackMap:
    """Index ECEF polylines on a uniform grid of ``cell_size`` metres."""
    if not cell_size > 0:
        raise ContractViolation("cell size must be positive")
    lines = [np.asarray(p, dtype=float).reshape(-1, 3) for p in polylines]
    if not lines:
        raise EmptyMapError("track map needs at least one polyline")
    for i, p in enumerate(lines):
        if p.shape[0] < 2:
            raise ContractViolation(f"polyline {i} has fewer than 2 waypoints")
        if not np.all(np.isfinite(p)):
            raise ContractViolation(f"polyline {i} has non-finite coordinates")
        seg_len = np.linalg.norm(np.diff(p, axis=0), axis=1)
        if np.any(seg_len <= MIN_SEGMENT_LENGTH):
            j = int(np.flatnonzero(seg_len <= MIN_SEGMENT_LENGTH)[0])
            raise ContractViolation(f"polyline {i}: waypoints {j} and {j + 1} coincide")

    allpts = np.vstack(lines)
    origin = np.round(0.5 * (allpts.min(axis=0) + allpts.max(axis=0)))
    starts = np.vstack([p[:-1] for p in lines]) - origin
    ends = np.vstack([p[1:] for p in lines]) - origin
    owner = np.concatenate([np.full(p.shape[0] - 1, i, dtype=np.int64) for i, p in enumerate(lines)])

    lo_all = np.minimum(starts, ends).min(axis=0)
    hi_all = np.maximum(starts, ends).max(axis=0)
    grid_origin = np.floor(lo_all / cell_size) * cell_size
    dims = (np.floor((hi_all - grid_origin) / cell_size).astype(np.int64) + 1)

    lo = np.floor((np.minimum(starts, ends) - grid_origin) / cell_size).astype(np.int64)
    hi = np.floor((np.maximum(starts, ends) - grid_origin) / cell_size).astype(np.int64)
    lo = np.clip(lo, 0, dims - 1)
    hi = np.clip(hi, 0, dims - 1)
    cell_keys = []
    cell_segs = []
    for s in range(starts.shape[0]):
        ix = np.arange(lo[s, 0], hi[s, 0] + 1)
        iy = np.arange(lo[s, 1], hi[s, 1] + 1)
        iz = np.arange(lo[s, 2], hi[s, 2] + 1)
        k = (ix[None, None, :] + dims[0] * (iy[None, :, None] + dims[1] * iz[:, None, None])).ravel()
        cell_keys.append(k)
        cell_segs.append(np.full(k.shape[0], s, dtype=np.int64))
    cell_keys = np.concatenate(cell_keys)
    cell_segs = np.concatenate(cell_segs)
    order = np.lexsort((cell_segs, cell_keys))
    cell_keys = cell_keys[order]
    cell_segs = cell_segs[order]
    keys, first = np.unique(cell_keys, return_index=True)
    offsets = np.append(first, cell_keys.shape[0]).astype(np.int64)

    return TrackMap(
        polylines=tuple(lines),
        origin=origin,
        starts=np.ascontiguousarray(starts),
        ends=np.ascontiguousarray(ends),
        polyline_index=owner,
        cell_size=float(cell_size),
        grid_origin=grid_origin,
        dims=dims,
        keys=keys.astype(np.int64),
        offsets=offsets,
        seg_ids=cell_segs,
    )


def polylines_from_lonlat(lines, stacklevel=2) -> List[np.ndarray]:
    """Convert (lon_deg, lat_deg[, h_m]) polylines to ECEF.

    Consecutive points closer than 1 mm after conversion are collapsed with a
    warning; polylines left with a single point are dropped (also warned).
    """
    out = []
    for i, line in enumerate(lines):
        pts = []
        for c in line:
            if len(c) < 2:
                raise ContractViolation(f"line {i}: coordinate needs at least longitude and latitude")
            lon, lat = float(c[0]), float(c[1])
            h = float(c[2]) if len(c) > 2 and c[2] is not None else 0.0
            if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0 and math.isfinite(h)):
                raise ContractViolation(f"line {i}: coordinate ({lon}, {lat}, {h}) out of range")
            pts.append(geodetic_to_ecef(GeodeticPosition.from_degrees(lat, lon, h)))
        kept = [pts[0]] if pts else []
        dropped = 0
        for p in pts[1:]:
            if np.linalg.norm(p - kept[-1]) <= MIN_SEGMENT_LENGTH:
                dropped += 1
            else:
                kept.append(p)
        if dropped:
            warnings.warn(f"line {i}: collapsed {dropped} duplicated consecutive point(s)", stacklevel=stacklevel)
        if len(kept) < 2:
            warnings.warn(f"line {i}: fewer than 2 distinct points, ignored", stacklevel=stacklevel)
            continue
        out.append(np.array(kept))
    return out


def track_from_lonlat(lines, cell_size: float = DEFAULT_CELL_SIZE) -> TrackMap:
    polylines = polylines_from_lonlat(lines, stacklevel=3)
    if not polylines:
        raise EmptyMapError("no usable line features")
    return build_index(polylines, cell_size)


def _make_projection(track: TrackMap, s, t, d) -> Projection:
    a, b = track.starts[s], track.ends[s]
    if t <= 0.0:
        q = a
    elif t >= 1.0:
        q = b
    else:
        q = a + t * (b - a)
    u = b - a
    return Projection(q + track.origin, int(s), u / np.linalg.norm(u), float(d), float(t))


def nearest_projection(point, track: TrackMap, radius: float) -> Optional[Projection]:
    """Closest point on any segment within ``radius`` (ties to the lowest id)."""
    p = track.to_local(point).reshape(3)
    s, t, d = _kernels.grid_query(p, float(radius), track.grid_origin, track.cell_size, track.dims,
                                  track.keys, track.offsets, track.seg_ids, track.starts, track.ends)
    if s < 0:
        return None
    return _make_projection(track, s, t, d)


def nearest_projection_scan(point, track: TrackMap, radius: float = math.inf) -> Optional[Projection]:
    """Same as :func:`nearest_projection` but by exhaustive scan of all segments."""
    p = track.to_local(point).reshape(3)
    s, t, d = _kernels.scan(p, track.starts, track.ends)
    if d > radius:
        return None
    return _make_projection(track, s, t, d)


def query_many(points, track: TrackMap, radius: float):
    """Indexed batch query: arrays (segment_id, t, distance); id -1 when nothing is in range."""
    p = np.ascontiguousarray(track.to_local(points).reshape(-1, 3))
    return _kernels.grid_query_many(p, float(radius), track.grid_origin, track.cell_size, track.dims,
                                    track.keys, track.offsets, track.seg_ids, track.starts, track.ends)


def scan_many(points, track: TrackMap):
    """Exhaustive batch query over every segment."""
    p = np.ascontiguousarray(track.to_local(points).reshape(-1, 3))
    return _kernels.scan_many(p, track.starts, track.ends)


def distance_to_track(point, track: TrackMap) -> float:
    """Distance to the nearest segment, unbounded radius."""
    if track.n_segments == 0:
        raise EmptyMapError("track map is empty")
    extent = float(np.linalg.norm(track.dims * track.cell_size))
    r = track.cell_size
    while r <= extent:
        proj = nearest_projection(point, track, r)
        if proj is not None:
            return proj.distance
        r *= 4.0
    # farther than the whole grid extent
    return nearest_projection_scan(point, track).distance


def constraint_axes(projection: Projection):
    """Orthonormal (along-track, cross-track horizontal, vertical) axes at a projection."""
    t = projection.along_track_unit
    up = enu_rotation(ecef_to_geodetic(projection.projected_point))[2]
    c = np.cross(t, up)
    n = np.linalg.norm(c)
    if n < 1e-9:
        # vertical segment: pick any horizontal direction
        c = enu_rotation(ecef_to_geodetic(projection.projected_point))[0]
    else:
        c = c / n
    v = np.cross(c, t)
    return t, c, v / np.linalg.norm(v)


def constraint_covariance(projection: Projection, config: SoftConstraintConfig) -> np.ndarray:
    t, c, v = constraint_axes(projection)
    return (config.along_track_sigma**2 * np.outer(t, t)
            + config.cross_track_sigma**2 * np.outer(c, c)
            + config.vertical_sigma**2 * np.outer(v, v))


_POS_JAC = np.hstack([np.eye(3), np.zeros((3, STATE_DIM - 3))])


def _position(x):
    return x[POS]


def _position_jacobian(x):
    return _POS_JAC


def soft_constraint_measurement(prior: StateEstimate, track: TrackMap,
                                config: SoftConstraintConfig) -> Optional[MeasurementBlock]:
    """Fabricated position measurement at the prior's projection onto the track.

    Returns None when no segment lies within ``config.search_radius`` or the
    constraint is disabled.
    """
    if not config.enabled:
        return None
    proj = nearest_projection(prior.mean[POS], track, config.search_radius)
    if proj is None:
        return None
    cov = constraint_covariance(proj, config)
    if not config.reproject_each_iteration:
        return MeasurementBlock(proj.projected_point.copy(), cov, _position, _position_jacobian,
                                label="track")

    # residual to the projection of the current iterate; the along-track
    # component of that residual is zero on segment interiors
    def offset_from_track(x):
        p = nearest_projection(x[POS], track, config.search_radius) or proj
        return x[POS] - p.projected_point

    def offset_jacobian(x):
        p = nearest_projection(x[POS], track, config.search_radius) or proj
        jac = np.zeros((3, STATE_DIM))
        jac[:, POS] = np.eye(3)
        if 0.0 < p.t < 1.0:
            jac[:, POS] -= np.outer(p.along_track_unit, p.along_track_unit)
        return jac

    return MeasurementBlock(np.zeros(3), cov, offset_from_track, offset_jacobian, label="track")
