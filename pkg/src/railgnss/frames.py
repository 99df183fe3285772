"""WGS-84 conversions between ECEF, geodetic and local east-north-up frames."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ContractViolation, DegenerateGeometryError

WGS84_A = 6378137.0
WGS84_E2 = 0.00669437999

_MAX_LAT_ITER = 20
_LAT_TOL = 1e-12


@dataclass(frozen=True)
class GeodeticPosition:
    """Latitude and longitude in radians, height in metres above the ellipsoid."""

    latitude: float
    longitude: float
    height: float = 0.0

    def __post_init__(self):
        if not abs(self.latitude) <= math.pi / 2:
            raise ContractViolation(f"latitude {self.latitude!r} rad outside [-pi/2, pi/2]")
        if not abs(self.longitude) <= math.pi:
            raise ContractViolation(f"longitude {self.longitude!r} rad outside [-pi, pi]")
        if not math.isfinite(self.height):
            raise ContractViolation("height must be finite")

    @classmethod
    def from_degrees(cls, lat_deg, lon_deg, height=0.0):
        return cls(math.radians(lat_deg), math.radians(lon_deg), float(height))


def prime_vertical_radius(lat):
    s = math.sin(lat)
    return WGS84_A / math.sqrt(1.0 - WGS84_E2 * s * s)


def geodetic_to_ecef(g: GeodeticPosition) -> np.ndarray:
    rn = prime_vertical_radius(g.latitude)
    clat, slat = math.cos(g.latitude), math.sin(g.latitude)
    clon, slon = math.cos(g.longitude), math.sin(g.longitude)
    return np.array([
        (rn + g.height) * clat * clon,
        (rn + g.height) * clat * slon,
        (rn + g.height - WGS84_E2 * rn) * slat,
    ])


def ecef_to_geodetic(p) -> GeodeticPosition:
    """Invert :func:`geodetic_to_ecef` by fixed-point iteration on latitude.

    Starts from the spherical latitude and iterates
    ``lat <- atan2(z + e2 * N(lat) * sin(lat), rho)`` until the update is below
    1e-12 rad (at most 20 passes).
    """
    x, y, z = (float(v) for v in p)
    if math.sqrt(x * x + y * y + z * z) <= 1e5:
        raise DegenerateGeometryError("position too close to the geocentre for a geodetic solution")
    rho = math.hypot(x, y)
    lon = math.atan2(y, x)
    lat = math.atan2(z, rho)
    for _ in range(_MAX_LAT_ITER):
        rn = prime_vertical_radius(lat)
        new = math.atan2(z + WGS84_E2 * rn * math.sin(lat), rho)
        done = abs(new - lat) < _LAT_TOL
        lat = new
        if done:
            break
    rn = prime_vertical_radius(lat)
    # cos(lat) is poorly conditioned near the poles, sin(lat) near the equator
    if abs(lat) < math.pi / 4:
        h = rho / math.cos(lat) - rn
    else:
        h = z / math.sin(lat) - rn * (1.0 - WGS84_E2)
    return GeodeticPosition(lat, lon, h)


def enu_rotation(g: GeodeticPosition) -> np.ndarray:
    """Rotation taking ECEF vectors to local east, north, up components."""
    slat, clat = math.sin(g.latitude), math.cos(g.latitude)
    slon, clon = math.sin(g.longitude), math.cos(g.longitude)
    return np.array([
        [-slon, clon, 0.0],
        [-clon * slat, -slon * slat, clat],
        [clon * clat, slon * clat, slat],
    ])


def ecef_to_enu_vector(v, g: GeodeticPosition) -> np.ndarray:
    return enu_rotation(g) @ np.asarray(v, dtype=float)


def enu_to_ecef_vector(v, g: GeodeticPosition) -> np.ndarray:
    return enu_rotation(g).T @ np.asarray(v, dtype=float)


def ecef_cov_to_enu(cov, g: GeodeticPosition) -> np.ndarray:
    """Rotate a 3x3 ECEF covariance into the local ENU frame."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (3, 3):
        raise ContractViolation(f"expected a 3x3 covariance, got shape {cov.shape}")
    scale = max(np.abs(cov).max(), 1e-300)
    if np.abs(cov - cov.T).max() > 1e-9 * scale:
        raise ContractViolation("covariance is not symmetric")
    t = enu_rotation(g)
    out = t @ cov @ t.T
    return 0.5 * (out + out.T)
