"""Numba vs numpy kernel timings, plus a whole-scenario run under each backend.

    python3 benchmarks/bench_kernels.py [--segments 10000] [--queries 1000]

Kernel timings call both implementations in-process. The scenario timing
starts a fresh interpreter per backend because the backend is fixed at import
time by RAILGNSS_DISABLE_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from railgnss import _kernels
from railgnss._accel import ENV_FLAG
from railgnss.track import build_index


def synthetic_map(n_segments, rng, step=20.0, n_lines=50):
    """Random-walk polylines around a point on the Earth's surface."""
    base = np.array([3_973_000.0, 1_022_000.0, 4_869_000.0])
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


def bench(fn, *args, repeat=5):
    fn(*args)  # compile / warm up
    n, _ = timeit.Timer(lambda: fn(*args)).autorange()
    return min(timeit.repeat(lambda: fn(*args), number=n, repeat=repeat)) / n


def kernel_cases(n_segments, n_queries, rng):
    track = build_index(synthetic_map(n_segments, rng))
    idx = rng.integers(0, track.n_segments, n_queries)
    pts = track.starts[idx] + rng.normal(0, 15, (n_queries, 3))
    grid = (track.grid_origin, track.cell_size, track.dims, track.keys, track.offsets,
            track.seg_ids, track.starts, track.ends)
    sats = rng.normal(0, 2.6e7, (12, 3))
    z = rng.normal(2.2e7, 10, 12)
    r = rng.uniform(1, 30, 12)
    return [
        ("scan (1 query)", "scan", (pts[0], track.starts, track.ends)),
        (f"scan_many ({n_queries})", "scan_many", (pts, track.starts, track.ends)),
        ("grid_query (1 query)", "grid_query", (pts[0], 100.0, *grid)),
        (f"grid_query_many ({n_queries})", "grid_query_many", (pts, 100.0, *grid)),
        ("ranges_los (12 sats)", "ranges_los", (np.zeros(3), sats)),
        ("mix (12 sats)", "mix", (z, r, z + 3.0, r)),
    ]


def scenario_time(disable_numba):
    env = dict(os.environ)
    env[ENV_FLAG] = "1" if disable_numba else "0"
    code = (
        "import time; from railgnss import sim\n"
        "sim.rmse_grid(sim.straight_scenario(seed=0))\n"
        "t = time.perf_counter(); sim.seed_grids(sim.straight_scenario(), range(5))\n"
        "print(time.perf_counter() - t)"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--segments", type=int, default=10_000)
    ap.add_argument("--queries", type=int, default=1_000)
    ap.add_argument("--skip-scenario", action="store_true")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)

    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for label, name, fargs in kernel_cases(args.segments, args.queries, rng):
        t_nb = bench(_kernels.NUMBA_KERNELS[name], *fargs)
        t_np = bench(_kernels.NUMPY_KERNELS[name], *fargs)
        print(f"{label:<28}{1e3 * t_nb:>12.4f}{1e3 * t_np:>12.4f}{t_np / t_nb:>10.1f}")

    if not args.skip_scenario:
        t_nb = scenario_time(False)
        t_np = scenario_time(True)
        print(f"\nstraight scenario, 5 seeds x 4 variants: numba {t_nb:.2f} s, numpy {t_np:.2f} s")


if __name__ == "__main__":
    main()
