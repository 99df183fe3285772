"""Readers and writers for observation, truth, trajectory, state and track files.

All delimited files are comma-separated with a header line. Floats are
written with 17 significant digits, so every writer/reader pair round-trips
bit-exactly.
"""

import csv
import json
import math
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from .errors import (
    ContractViolation,
    EmptyMapError,
    FileFormatError,
    HeaderError,
    MalformedRowError,
    NonFiniteFieldError,
    NonMonotoneEpochError,
)
from .filtering import EpochRecord, FilterResult
from .frames import ecef_cov_to_enu, ecef_to_geodetic
from .gnss import POS, SatelliteObservation
from .iekf import StateEstimate
from .track import TrackMap, distance_to_track, track_from_lonlat

OBS_VERSION = 1
OBS_MAGIC = "# railgnss-observations"
OBS_COLUMNS = [
    "epoch_time", "sat_id", "pseudorange_m", "doppler_mps", "cn0_dbhz",
    "sat_x_m", "sat_y_m", "sat_z_m", "sat_vx_mps", "sat_vy_mps", "sat_vz_mps", "sat_clk_s",
]
TRUTH_COLUMNS = ["epoch_time", "x_m", "y_m", "z_m"]
TRAJECTORY_COLUMNS = [
    "epoch_time", "x_m", "y_m", "z_m", "sd_east_m", "sd_north_m", "sd_up_m",
    "converged", "iterations", "distance_to_track_m",
]
STATE_NAMES = ["x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps", "clock_bias_m", "clock_drift_mps"]


def fmt(x) -> str:
    return format(float(x), ".17g")


def _open_existing(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


# --------------------------------------------------------------------------
# observations
# --------------------------------------------------------------------------


def write_observations(path, epochs) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"{OBS_MAGIC} version={OBS_VERSION} frame=ECEF time_unit=s\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_COLUMNS)
        for ep in epochs:
            for o in ep.observations:
                w.writerow([
                    fmt(ep.time), o.sat_id, fmt(o.pseudorange),
                    "" if o.doppler_range_rate is None else fmt(o.doppler_range_rate),
                    fmt(o.cn0), *map(fmt, o.sat_position), *map(fmt, o.sat_velocity),
                    fmt(o.sat_clock_offset),
                ])


def _parse_header(path, line):
    if not line.startswith(OBS_MAGIC):
        raise HeaderError("missing observation file header", path, 1)
    meta = {}
    for tok in line[len(OBS_MAGIC):].split():
        k, sep, v = tok.partition("=")
        if not sep:
            raise HeaderError(f"bad header token {tok!r}", path, 1)
        meta[k] = v
    if meta.get("version") != str(OBS_VERSION):
        raise HeaderError(f"unsupported version {meta.get('version')!r}", path, 1)
    if meta.get("frame") != "ECEF":
        raise HeaderError(f"unsupported frame {meta.get('frame')!r}", path, 1)
    if meta.get("time_unit") != "s":
        raise HeaderError(f"unsupported time unit {meta.get('time_unit')!r}", path, 1)
    return meta


def _float(path, lineno, name, text, allow_empty=False):
    if allow_empty and text.strip() == "":
        return None
    try:
        v = float(text)
    except ValueError:
        raise MalformedRowError(f"{name}: cannot parse {text!r} as a number", path, lineno) from None
    if not math.isfinite(v):
        raise NonFiniteFieldError(f"{name} is not finite ({text!r})", path, lineno)
    return v


def load_observations(path) -> List[EpochRecord]:
    """Read an observation file into epochs (rows grouped by ``epoch_time``)."""
    path = _open_existing(path)
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\r\n")
        _parse_header(path, first)
        reader = csv.reader(fh)
        try:
            cols = next(reader)
        except StopIteration:
            raise HeaderError("missing column header line", path, 2) from None
        if [c.strip() for c in cols] != OBS_COLUMNS:
            raise HeaderError(f"unexpected columns {cols}", path, 2)
        epochs: List[EpochRecord] = []
        for lineno, row in enumerate(reader, start=3):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(OBS_COLUMNS):
                raise MalformedRowError(f"expected {len(OBS_COLUMNS)} fields, got {len(row)}", path, lineno)
            t = _float(path, lineno, "epoch_time", row[0])
            sat_id = row[1].strip()
            if not sat_id:
                raise MalformedRowError("empty sat_id", path, lineno)
            rho = _float(path, lineno, "pseudorange_m", row[2])
            if not rho > 0:
                raise MalformedRowError(f"pseudorange must be positive, got {rho!r}", path, lineno)
            dop = _float(path, lineno, "doppler_mps", row[3], allow_empty=True)
            vals = [_float(path, lineno, name, text) for name, text in zip(OBS_COLUMNS[4:], row[4:])]
            try:
                obs = SatelliteObservation(
                    sat_id=sat_id, pseudorange=rho, cn0=vals[0],
                    sat_position=vals[1:4], sat_velocity=vals[4:7], sat_clock_offset=vals[7],
                    doppler_range_rate=dop,
                )
            except ContractViolation as exc:
                raise MalformedRowError(str(exc), path, lineno) from None
            if epochs and t < epochs[-1].time:
                raise NonMonotoneEpochError(
                    f"epoch_time {t!r} precedes previous epoch {epochs[-1].time!r}", path, lineno)
            if epochs and t == epochs[-1].time:
                epochs[-1].observations.append(obs)
            else:
                epochs.append(EpochRecord(time=t, observations=[obs]))
    return epochs


# --------------------------------------------------------------------------
# truth / trajectories / state
# --------------------------------------------------------------------------


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path, header):
    path = _open_existing(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            cols = next(reader)
        except StopIteration:
            raise HeaderError("empty file", path, 1) from None
        if [c.strip() for c in cols] != header:
            raise HeaderError(f"unexpected columns {cols}, expected {header}", path, 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRowError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            rows.append((lineno, row))
    return path, rows


def write_truth(path, times, positions) -> None:
    _write_rows(path, TRUTH_COLUMNS, ([fmt(t), *map(fmt, p)] for t, p in zip(times, positions)))


def load_truth(path):
    """Returns ``(times, positions)`` arrays."""
    path, rows = _read_rows(path, TRUTH_COLUMNS)
    vals = [[_float(path, ln, c, v) for c, v in zip(TRUTH_COLUMNS, row)] for ln, row in rows]
    arr = np.array(vals, dtype=float).reshape(-1, 4)
    return arr[:, 0], arr[:, 1:4]


def trajectory_rows(result: FilterResult, track: Optional[TrackMap] = None):
    for t, est, diag in zip(result.times, result.estimates, result.diagnostics):
        p = est.mean[POS]
        enu = ecef_cov_to_enu(est.covariance[POS, POS], ecef_to_geodetic(p))
        sd = np.sqrt(np.maximum(np.diag(enu), 0.0))
        dist = "" if track is None else fmt(distance_to_track(p, track))
        yield [fmt(t), *map(fmt, p), *map(fmt, sd), str(int(diag.converged)), str(diag.iterations), dist]


def write_trajectory(path, result: FilterResult, track: Optional[TrackMap] = None) -> None:
    _write_rows(path, TRAJECTORY_COLUMNS, trajectory_rows(result, track))


def load_trajectory(path):
    """Returns ``(times, positions)``; the remaining columns are diagnostics."""
    path, rows = _read_rows(path, TRAJECTORY_COLUMNS)
    times = np.array([_float(path, ln, "epoch_time", r[0]) for ln, r in rows])
    pos = np.array([[_float(path, ln, c, v) for c, v in zip(TRAJECTORY_COLUMNS[1:4], r[1:4])] for ln, r in rows])
    return times, pos.reshape(-1, 3)


def write_state(path, estimate: StateEstimate) -> None:
    header = ["component", "mean"] + [f"cov_{n}" for n in STATE_NAMES]
    _write_rows(path, header, ([STATE_NAMES[i], fmt(estimate.mean[i]), *map(fmt, estimate.covariance[i])]
                               for i in range(len(STATE_NAMES))))


def load_state(path) -> StateEstimate:
    header = ["component", "mean"] + [f"cov_{n}" for n in STATE_NAMES]
    path, rows = _read_rows(path, header)
    if [r[0] for _, r in rows] != STATE_NAMES:
        raise FileFormatError(f"expected rows {STATE_NAMES}", path)
    mean = np.array([_float(path, ln, "mean", r[1]) for ln, r in rows])
    cov = np.array([[_float(path, ln, header[j + 2], v) for j, v in enumerate(r[2:])] for ln, r in rows])
    return StateEstimate(mean, cov)


# --------------------------------------------------------------------------
# track files (GeoJSON line features)
# --------------------------------------------------------------------------


def _line_coords(geom, path):
    kind = geom.get("type") if isinstance(geom, dict) else None
    if kind == "LineString":
        return [geom["coordinates"]]
    if kind == "MultiLineString":
        return list(geom["coordinates"])
    if kind == "GeometryCollection":
        return [c for g in geom.get("geometries", []) for c in _line_coords(g, path)]
    return []


def load_track_lines(path):
    """Line features of a GeoJSON file as lists of (lon_deg, lat_deg[, h_m])."""
    path = _open_existing(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(doc, dict):
        raise FileFormatError("expected a GeoJSON object", path)
    kind = doc.get("type")
    if kind == "FeatureCollection":
        geoms = [f.get("geometry") for f in doc.get("features", []) if isinstance(f, dict)]
    elif kind == "Feature":
        geoms = [doc.get("geometry")]
    else:
        geoms = [doc]
    lines = [line for g in geoms if g for line in _line_coords(g, path)]
    for line in lines:
        for c in line:
            if not isinstance(c, (list, tuple)) or len(c) < 2 or \
                    not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in c):
                raise FileFormatError(f"bad coordinate {c!r}", path)
    return lines


def load_track(path, cell_size: float = 50.0) -> TrackMap:
    lines = load_track_lines(path)
    if not lines:
        raise EmptyMapError(f"{path}: no line features")
    try:
        return track_from_lonlat(lines, cell_size)
    except EmptyMapError:
        raise
    except ContractViolation as exc:
        raise FileFormatError(str(exc), path) from None


def write_track(path, lines) -> None:
    features = [{
        "type": "Feature",
        "properties": {"railway": "tram"},
        "geometry": {"type": "LineString", "coordinates": [[float(v) for v in c] for c in line]},
    } for line in lines]
    Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": features}, indent=1))


# --------------------------------------------------------------------------
# YAML configs
# --------------------------------------------------------------------------


def load_yaml(path) -> dict:
    path = _open_existing(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise FileFormatError(f"invalid YAML: {exc}", path) from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise FileFormatError("expected a mapping at top level", path)
    return doc


def write_yaml(path, doc) -> None:
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))
