import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from railgnss import sim
from railgnss.errors import ContractViolation
from railgnss.gnss import correct_observations
from railgnss.iekf import StateEstimate
from railgnss.mixing import VARIANCE_FLOOR, mix, mix_epoch, predicted_measurement_variance

finite = st.floats(-1e3, 1e3)
variance = st.floats(1e-3, 1e3)


def test_predicted_variance(rng):
    cov = np.eye(8) * 7.0
    cov[6, 6] = 1e4  # clock variance is not projected
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    assert predicted_measurement_variance(u, cov) == pytest.approx(7.0, rel=1e-12)
    cov = np.eye(8)
    cov[0, 0] = 9.0
    assert predicted_measurement_variance([1, 0, 0], cov) == 9.0
    a = rng.normal(size=(8, 8))
    cov = a @ a.T
    assert predicted_measurement_variance(u, cov) == pytest.approx(float(u @ cov[:3, :3] @ u), rel=1e-12)


def test_predicted_variance_rejects_indefinite():
    cov = np.eye(8)
    cov[0, 0] = -1.0
    with pytest.raises(ContractViolation):
        predicted_measurement_variance([1, 0, 0], cov)


def test_symmetric_mixture():
    m = mix(10.0, 4.0, 0.0, 4.0)
    assert m.weight_measurement == 0.5 and m.weight_prediction == 0.5
    assert m.mean == 5.0
    assert m.variance == 4.0 + 100.0 / 4


def test_consistent_measurement():
    m = mix(3.0, 2.0, 3.0, 6.0)
    assert m.mean == pytest.approx(3.0, abs=1e-15)
    assert m.variance == pytest.approx(0.75 * 2.0 + 0.25 * 6.0)
    assert m.variance <= 6.0


def test_limits():
    assert mix(1.0, 1e-9, 5.0, 1.0).mean == pytest.approx(1.0, abs=1e-3)
    assert mix(1.0, 1e12, 5.0, 1.0).mean == pytest.approx(5.0, abs=1e-9)


def test_invalid_variance():
    with pytest.raises(ContractViolation):
        mix(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ContractViolation):
        mix(1.0, 1.0, 1.0, -1.0)


def test_floor():
    m = mix(1.0, 1e-12, 1.0, 1e-12)
    assert m.variance == pytest.approx(VARIANCE_FLOOR)


@settings(max_examples=300, deadline=None)
@given(finite, variance, finite, variance)
def test_moment_identities(z_a, r_a, z_b, r_b):
    m = mix(z_a, r_a, z_b, r_b)
    assert m.weight_measurement + m.weight_prediction == pytest.approx(1.0, abs=1e-12)
    lo, hi = min(z_a, z_b), max(z_a, z_b)
    assert lo - 1e-9 <= m.mean <= hi + 1e-9
    mu_a = (1 / r_a) / (1 / r_a + 1 / r_b)
    mu_b = 1 - mu_a
    mean = mu_a * z_a + mu_b * z_b
    var = mu_a * (r_a + (z_a - mean) ** 2) + mu_b * (r_b + (z_b - mean) ** 2)
    assert m.mean == pytest.approx(mean, rel=1e-12, abs=1e-9)
    assert m.variance == pytest.approx(var, rel=1e-9)
    assert m.variance >= mu_a * r_a + mu_b * r_b - 1e-9 * var
    assert m.variance > 0


def test_monte_carlo_moments(rng):
    n = 1_000_000
    for _ in range(20):
        z_a, z_b = rng.normal(0, 10, 2)
        r_a, r_b = rng.uniform(0.5, 20, 2)
        m = mix(z_a, r_a, z_b, r_b)
        pick = rng.random(n) < m.weight_measurement
        s = np.where(pick, z_a + math.sqrt(r_a) * rng.standard_normal(n), z_b + math.sqrt(r_b) * rng.standard_normal(n))
        se_mean = s.std() / math.sqrt(n)
        assert abs(s.mean() - m.mean) < 4 * se_mean
        se_var = math.sqrt(np.var((s - s.mean()) ** 2) / n)
        assert abs(s.var() - m.variance) < 4 * se_var


def test_mix_epoch_matches_scalar_mix():
    cfg = sim.straight_scenario(seed=3)
    run = sim.prepare(cfg)
    prior = run.initial
    corrected = correct_observations(run.epochs[45].observations, prior.mean[:3])
    mixed = mix_epoch(corrected, prior)
    assert len(mixed) == 5
    for c, m in zip(corrected, mixed):
        z_pred = np.linalg.norm(prior.mean[:3] - c.sat_position) + prior.mean[6]
        r_pred = predicted_measurement_variance(c.line_of_sight, prior.covariance)
        ref = mix(c.corrected_pseudorange, c.variance, z_pred, r_pred)
        assert m.mean == pytest.approx(ref.mean, rel=1e-14)
        assert m.variance == pytest.approx(ref.variance, rel=1e-12)
    assert mix_epoch([], prior) == []


def test_mix_epoch_rejects_bad_prior():
    cfg = sim.straight_scenario(seed=3)
    run = sim.prepare(cfg)
    corrected = correct_observations(run.epochs[0].observations, run.initial.mean[:3])
    cov = np.eye(8)
    cov[:3, :3] = -np.eye(3)
    with pytest.raises(ContractViolation):
        mix_epoch(corrected, StateEstimate(run.initial.mean, cov))
