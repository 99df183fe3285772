import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import central_difference, random_geometry, sat
from railgnss.errors import BelowHorizonError, ContractViolation, DegenerateFrequencyError, DegenerateGeometryError
from railgnss.frames import GeodeticPosition, enu_rotation, geodetic_to_ecef
from railgnss.gnss import (
    CLOCK_BIAS,
    SPEED_OF_LIGHT,
    correct_observation,
    corrected_pseudorange,
    doppler_jacobian_row,
    doppler_predict,
    elevation_angle,
    iono_free_pseudorange,
    line_of_sight,
    measurement_variance,
    pseudorange_jacobian_row,
    pseudorange_predict,
    relativistic_clock_correction,
)

F1, F2 = 1575.42e6, 1227.60e6


def test_line_of_sight_axis():
    np.testing.assert_array_equal(line_of_sight(np.zeros(3), [2.5e7, 0, 0]), [-1.0, 0.0, 0.0])


def test_line_of_sight_oracle_and_translation(rng):
    for _ in range(50):
        a, b, shift = rng.normal(0, 1e7, (3, 3))
        los = line_of_sight(a, b)
        d = a - b
        np.testing.assert_allclose(los, d / math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2), rtol=1e-12)
        assert np.linalg.norm(los) == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(line_of_sight(a + shift, b + shift), los, atol=1e-9)


def test_line_of_sight_coincident():
    with pytest.raises(DegenerateGeometryError):
        line_of_sight(np.ones(3), np.ones(3))


def test_relativistic_correction():
    assert relativistic_clock_correction([2.6e7, 0, 0], [0, 3000.0, 0]) == 0.0
    expected = -2 * 2.6e9 / SPEED_OF_LIGHT**2
    assert relativistic_clock_correction([2.6e7, 0, 0], [100.0, 0, 0]) == pytest.approx(expected, rel=1e-15)
    assert relativistic_clock_correction([2.6e7, 0, 0], [-100.0, 0, 0]) == pytest.approx(-expected, rel=1e-15)


def test_iono_free_examples():
    assert iono_free_pseudorange(2.1e7, 2.1e7, F1, F2) == pytest.approx(2.1e7, rel=1e-15)
    rho1 = 2.0e7 + 5.0
    rho2 = 2.0e7 + 5.0 * (F1 / F2) ** 2
    assert iono_free_pseudorange(rho1, rho2, F1, F2) == pytest.approx(2.0e7, abs=1e-7)
    assert iono_free_pseudorange(3 * rho1, 3 * rho2, F1, F2) == pytest.approx(
        3 * iono_free_pseudorange(rho1, rho2, F1, F2), rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1e18), st.floats(2.0e7, 2.6e7))
def test_iono_free_removes_inverse_square_delay(K, rho):
    out = iono_free_pseudorange(rho + K / F1**2, rho + K / F2**2, F1, F2)
    assert abs(out - rho) < 1e-7 * max(1.0, K / F2**2)


def test_iono_free_bad_frequencies():
    with pytest.raises(DegenerateFrequencyError):
        iono_free_pseudorange(1.0, 1.0, F1, F1)
    with pytest.raises(ContractViolation):
        iono_free_pseudorange(1.0, 1.0, -F1, F2)


def test_pseudorange_predict_examples(rng):
    s = sat([2.5e7, 0, 0])
    x = np.zeros(8)
    assert pseudorange_predict(x, s) == 2.5e7
    x[CLOCK_BIAS] = 100.0
    assert pseudorange_predict(x, s) == 2.5e7 + 100.0
    for _ in range(20):
        x, s = random_geometry(rng)
        assert pseudorange_predict(x, s) == pytest.approx(
            np.linalg.norm(x[0:3] - s.sat_position) + x[6], abs=1e-9)


def test_pseudorange_jacobian_axis():
    np.testing.assert_array_equal(pseudorange_jacobian_row(np.zeros(8), sat([2.5e7, 0, 0])),
                                  [-1, 0, 0, 0, 0, 0, 1, 0])


def test_pseudorange_jacobian_finite_differences(rng):
    for _ in range(100):
        x, s = random_geometry(rng)
        row = pseudorange_jacobian_row(x, s)
        fd = central_difference(lambda y: pseudorange_predict(y, s), x)
        np.testing.assert_allclose(row, fd, rtol=1e-4, atol=1e-4 * np.abs(row).max())
        assert np.all(row[3:6] == 0) and row[7] == 0


def test_doppler_predict_examples():
    s = sat([2.5e7, 0, 0], [-800.0, 0, 0])
    x = np.zeros(8)
    assert doppler_predict(x, s) == pytest.approx(800.0)
    x[3:6] = [-800.0, 0, 0]
    assert doppler_predict(x, s) == 0.0
    x[7] = 5.0
    assert doppler_predict(x, s) == 5.0


def test_doppler_jacobian_finite_differences(rng):
    for _ in range(100):
        x, s = random_geometry(rng)
        row = doppler_jacobian_row(x, s)
        fd = central_difference(lambda y: doppler_predict(y, s), x)
        np.testing.assert_allclose(row, fd, rtol=1e-4, atol=1e-4 * np.abs(row).max())
        assert row[6] == 0.0 and row[7] == 1.0
        # the position block is the slow line-of-sight rotation term
        assert np.abs(row[0:3]).max() < 1e-3


def test_variance_anchors():
    assert measurement_variance(50.0, math.pi / 2) == 1.0
    assert measurement_variance(10.0, math.pi / 2) == 30.0
    assert measurement_variance(30.0, math.pi / 6) == pytest.approx(4 * measurement_variance(30.0, math.pi / 2))


def test_variance_simulator_levels():
    # hand evaluation: knee factor A / 10^((T - F) / a) = 3
    assert measurement_variance(45.0, math.pi / 2) == pytest.approx(10**0.125 * 1.25, rel=1e-12)
    assert measurement_variance(30.0, math.pi / 2) == pytest.approx(10**0.5 * 2.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(10.0, 50.0), st.floats(10.0, 50.0), st.floats(0.01, math.pi / 2), st.floats(0.01, math.pi / 2))
def test_variance_monotone(c1, c2, e1, e2):
    if c1 < c2:
        assert measurement_variance(c1, 1.0) > measurement_variance(c2, 1.0)
    if e1 < e2:
        assert measurement_variance(40.0, e1) > measurement_variance(40.0, e2)


def test_variance_below_horizon():
    with pytest.raises(BelowHorizonError):
        measurement_variance(40.0, 0.0)


def test_elevation_examples(rng):
    g = GeodeticPosition(0.6, 0.2, 100.0)
    p = geodetic_to_ecef(g)
    T = enu_rotation(g)
    assert elevation_angle(p, p + 2e7 * T[2]) == pytest.approx(math.pi / 2, abs=1e-9)
    assert elevation_angle(p, p + 2e7 * T[0]) == pytest.approx(0.0, abs=1e-12)
    for _ in range(20):
        d = rng.normal(size=3)
        enu = T @ d
        expected = math.asin(enu[2] / np.linalg.norm(enu))
        assert elevation_angle(p, p + d * 1e7) == pytest.approx(expected, abs=1e-9)


def test_observation_validation():
    with pytest.raises(ContractViolation):
        sat([2.5e7, 0, 0], pseudorange=-1.0)
    with pytest.raises(ContractViolation):
        sat([1e6, 0, 0])
    with pytest.raises(ContractViolation):
        sat([2.5e7, 0, 0], cn0=70.0)
    with pytest.raises(ContractViolation):
        sat([2.5e7, 0, 0], second_freq_pseudorange=2.2e7)


def test_corrected_pseudorange():
    s = sat([2.6e7, 0, 0], [100.0, 0, 0], sat_clock_offset=1e-6,
            pseudorange=2.0e7 + 5.0, second_freq_pseudorange=2.0e7 + 5.0 * (F1 / F2) ** 2, freq_pair=(F1, F2))
    expected = 2.0e7 + SPEED_OF_LIGHT * (1e-6 - 2 * 2.6e9 / SPEED_OF_LIGHT**2)
    assert corrected_pseudorange(s) == pytest.approx(expected, abs=1e-6)


def test_correct_observation_fields():
    g = GeodeticPosition(0.5, 0.1, 0.0)
    p = geodetic_to_ecef(g)
    up = enu_rotation(g)[2]
    c = correct_observation(sat(p + 2.2e7 * up, cn0=50.0), p)
    assert c.elevation == pytest.approx(math.pi / 2, abs=1e-9)
    assert c.variance == pytest.approx(1.0, rel=1e-9)
    assert math.isnan(c.range_rate)
    np.testing.assert_allclose(c.line_of_sight, -up, atol=1e-12)
