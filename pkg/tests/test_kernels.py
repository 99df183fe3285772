"""The numba kernels and their numpy fallbacks must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import synthetic_map
from railgnss import _kernels
from railgnss._accel import ENV_FLAG, HAVE_NUMBA
from railgnss.track import build_index

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")

NB, NP = _kernels.NUMBA_KERNELS, _kernels.NUMPY_KERNELS


@pytest.fixture(scope="module")
def track():
    return build_index(synthetic_map(1000, np.random.default_rng(3)))


def grid_args(track):
    return (track.grid_origin, track.cell_size, track.dims, track.keys, track.offsets,
            track.seg_ids, track.starts, track.ends)


def test_scan_agrees(track, rng):
    pts = track.starts[rng.integers(0, track.n_segments, 100)] + rng.normal(0, 30, (100, 3))
    a, b = NB["scan_many"](pts, track.starts, track.ends), NP["scan_many"](pts, track.starts, track.ends)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_allclose(a[1], b[1], atol=1e-12)
    np.testing.assert_allclose(a[2], b[2], atol=1e-9)
    s, t, d = NB["scan"](pts[0], track.starts, track.ends)
    assert (s, pytest.approx(d, abs=1e-9)) == (a[0][0], a[2][0])


@pytest.mark.parametrize("radius", [5.0, 40.0, 150.0])
def test_grid_query_agrees(track, rng, radius):
    pts = track.starts[rng.integers(0, track.n_segments, 200)] + rng.normal(0, 40, (200, 3))
    a = NB["grid_query_many"](pts, radius, *grid_args(track))
    b = NP["grid_query_many"](pts, radius, *grid_args(track))
    np.testing.assert_array_equal(a[0], b[0])
    hit = a[0] >= 0
    np.testing.assert_allclose(a[2][hit], b[2][hit], atol=1e-9)
    assert np.all(np.isinf(a[2][~hit])) and np.all(np.isinf(b[2][~hit]))
    for k in range(10):
        one_nb = NB["grid_query"](pts[k], radius, *grid_args(track))
        one_np = NP["grid_query"](pts[k], radius, *grid_args(track))
        assert one_nb[0] == one_np[0] == a[0][k]


def test_grid_query_outside_grid(track):
    far = track.starts[0] + 1e6
    assert NB["grid_query"](far, 10.0, *grid_args(track))[0] == -1
    assert NP["grid_query"](far, 10.0, *grid_args(track))[0] == -1


def test_ranges_and_mix_agree(rng):
    sats = rng.normal(0, 2.6e7, (9, 3))
    p = rng.normal(0, 6e6, 3)
    for x, y in zip(NB["ranges_los"](p, sats), NP["ranges_los"](p, sats)):
        np.testing.assert_allclose(x, y, rtol=1e-15)
    args = (rng.normal(0, 100, 9), rng.uniform(0.1, 30, 9), rng.normal(0, 100, 9), rng.uniform(0.1, 30, 9))
    for x, y in zip(NB["mix"](*args), NP["mix"](*args)):
        np.testing.assert_allclose(x, y, rtol=1e-13)


def test_env_flag_selects_numpy():
    env = dict(os.environ, **{ENV_FLAG: "1"})
    out = subprocess.run([sys.executable, "-c", "import railgnss; print(railgnss.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
