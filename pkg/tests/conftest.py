import numpy as np
import pytest

from railgnss.frames import GeodeticPosition, geodetic_to_ecef
from railgnss.gnss import SatelliteObservation
from railgnss.iekf import MeasurementBlock, StateEstimate


def random_spd(rng, n, scale=1.0, cond=100.0):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = scale * np.exp(rng.uniform(0.0, np.log(cond), n))
    m = q @ np.diag(eig) @ q.T
    return 0.5 * (m + m.T)


def linear_block(H, z, R, label="lin", offset=None):
    H = np.atleast_2d(np.asarray(H, dtype=float))
    b = np.zeros(H.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    return MeasurementBlock(z, R, lambda x: H @ x + b, lambda x: H, label=label)


def random_linear_problem(rng, n=8, m=5):
    prior = StateEstimate(rng.normal(size=n), random_spd(rng, n))
    H = rng.normal(size=(m, n))
    R = random_spd(rng, m)
    z = rng.normal(size=m)
    return prior, H, z, R


def synthetic_map(n_segments, rng, step=20.0, n_lines=50):
    """Random-walk ECEF polylines scattered over a few kilometres."""
    base = geodetic_to_ecef(GeodeticPosition.from_degrees(50.0, 14.4, 250.0))
    per = n_segments // n_lines
    lines = []
    for _ in range(n_lines):
        heading = rng.uniform(0, 2 * np.pi)
        steps = []
        for _ in range(per):
            heading += rng.normal(0, 0.2)
            steps.append([step * np.cos(heading), step * np.sin(heading), rng.normal(0, 0.5)])
        start = base + rng.uniform(-3000, 3000, 3)
        lines.append(start + np.vstack([np.zeros(3), np.cumsum(steps, axis=0)]))
    return lines


def kf_oracle(prior, H, z, R):
    """One-shot linear Kalman update written out with explicit inverses."""
    P = prior.covariance
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    mean = prior.mean + K @ (z - H @ prior.mean)
    cov = (np.eye(len(mean)) - K @ H) @ P
    return mean, 0.5 * (cov + cov.T)


def nonlinear_block(rng, n, m, scale=1.0):
    A = rng.normal(size=(m, n)) * scale
    B = rng.normal(size=(m, n)) * 0.3

    def g(x):
        return np.sin(A @ x) + B @ (x * x)

    def jac(x):
        return np.cos(A @ x)[:, None] * A + 2.0 * B * x[None, :]

    return MeasurementBlock(rng.normal(size=m) * 2, random_spd(rng, m, 0.1), g, jac, "nl")


def sat(pos, vel=(0.0, 0.0, 0.0), **kw):
    kw.setdefault("cn0", 45.0)
    return SatelliteObservation("G01", kw.pop("pseudorange", 2.2e7), sat_position=pos, sat_velocity=vel, **kw)


def random_geometry(rng):
    g = GeodeticPosition(rng.uniform(-1.4, 1.4), rng.uniform(-3, 3), rng.uniform(0, 500))
    x = np.zeros(8)
    x[0:3] = geodetic_to_ecef(g)
    x[3:6] = rng.normal(0, 20, 3)
    x[6] = rng.normal(0, 1e3)
    x[7] = rng.normal(0, 10)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    s = sat(rng.normal(size=3) * 0 + 2.6e7 * d, rng.normal(0, 3000, 3))
    return x, s


def central_difference(f, x, rel=1e-6):
    jac = np.zeros(8)
    for i in range(8):
        h = rel * max(abs(x[i]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        jac[i] = (f(xp) - f(xm)) / (2 * h)
    return jac


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
