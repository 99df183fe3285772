"""Command-line front end: simulate, filter, evaluate, compare.

Exit codes: 0 success, 1 numerical or runtime failure, 2 usage error or an
unreadable/malformed input file.
"""

import argparse
from dataclasses import replace
import logging
from pathlib import Path
import sys

import numpy as np

from . import io, metrics, sim
from .errors import ContractViolation, FileFormatError, NumericalFailure, RailGnssError
from .filtering import FilterConfig, initial_state_from_fix, run_filter

log = logging.getLogger("railgnss")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

BUILTIN_SCENARIOS = {"straight": sim.straight_scenario, "curved": sim.curved_scenario}


class UsageError(Exception):
    pass


def variant_filename(prefix, name, suffix=".csv"):
    return f"{prefix}_{name.replace('+', '_')}{suffix}"


def _filter_overrides(args):
    if not args.config:
        return None
    doc = io.load_yaml(args.config)
    unknown = set(doc) - {"filter"}
    if unknown:
        raise ContractViolation(f"{args.config}: unknown top-level keys {sorted(unknown)}")
    return doc.get("filter") or {}


def load_scenario(args) -> sim.ScenarioConfig:
    src = args.scenario
    if not Path(src).exists() and src in BUILTIN_SCENARIOS:
        cfg = BUILTIN_SCENARIOS[src]()
    else:
        cfg = sim.scenario_from_dict(io.load_yaml(src))
    over = _filter_overrides(args)
    if over is not None:
        cfg = replace(cfg, filter=FilterConfig.from_dict(over, base=cfg.filter))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_simulate(args):
    cfg = load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = sim.prepare(cfg)
    io.write_observations(out / "observations.csv", run.epochs)
    io.write_truth(out / "truth.csv", [e.time for e in run.epochs], run.truth)
    io.write_track(out / "track.geojson", sim.track_lonlat(cfg))
    io.write_state(out / "initial_state.csv", run.initial)
    io.write_yaml(out / "filter.yaml", {"filter": cfg.filter.to_dict()})
    io.write_yaml(out / "scenario.yaml", sim.scenario_to_dict(cfg))
    reports = []
    for name, mixing, constraint in sim.VARIANTS:
        res = run.run(mixing, constraint, name)
        io.write_trajectory(out / variant_filename("trajectory", name), res.filter_result, run.track)
        rep = metrics.evaluate(res.filter_result.positions, run.track, run.truth, label=name)
        metrics.write_steps(out / variant_filename("steps", name), rep)
        reports.append(rep)
        log.info("%s: rmse %.3f m, rms distance to track %.3f m", name, rep.rmse_to_truth_m,
                 rep.rms_distance_to_track_m)
    metrics.write_summary(out / "metrics.csv", reports)
    metrics.write_summary(sys.stdout, reports)
    return EXIT_OK


def cmd_filter(args):
    epochs = io.load_observations(args.observations)
    if not epochs:
        raise UsageError(f"{args.observations}: no epochs")
    if args.constraint and not args.track:
        raise UsageError("--constraint needs --track")
    track = io.load_track(args.track) if args.track else None
    config = FilterConfig.from_dict(_filter_overrides(args) or {})
    initial = io.load_state(args.init) if args.init else initial_state_from_fix(epochs[0], config)
    res = run_filter(epochs, initial, config, track, mixing=args.mixing, constraint=args.constraint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(out / "trajectory.csv", res, track)
    io.write_state(out / "final_state.csv", res.estimates[-1])
    n_bad = sum(not d.converged for d in res.diagnostics)
    if n_bad:
        log.warning("%d of %d updates hit the iteration cap", n_bad, len(res.diagnostics))
    log.info("wrote %d epochs to %s", len(res.times), out / "trajectory.csv")
    return EXIT_OK


def cmd_evaluate(args):
    times, pos = io.load_trajectory(args.trajectory)
    if len(times) == 0:
        raise UsageError(f"{args.trajectory}: empty trajectory")
    track = io.load_track(args.track)
    truth = None
    if args.truth:
        t_truth, truth = io.load_truth(args.truth)
        if len(t_truth) != len(times) or np.any(t_truth != times):
            raise UsageError("truth and trajectory epochs differ")
    rep = metrics.evaluate(pos, track, truth, label=Path(args.trajectory).stem)
    metrics.write_summary(sys.stdout, [rep])
    if args.steps:
        metrics.write_steps(args.steps, rep)
    return EXIT_OK


def cmd_compare(args):
    cfg = load_scenario(args)
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    grids = sim.seed_grids(cfg, range(cfg.seed, cfg.seed + args.seeds))
    mean = grids.mean(axis=0)
    order = np.mean([sim.ordering_holds(g) for g in grids])
    print(",without_soft_constraint,with_soft_constraint")
    print(f"with_mixing,{mean[0, 0]:.3f},{mean[0, 1]:.3f}")
    print(f"without_mixing,{mean[1, 0]:.3f},{mean[1, 1]:.3f}")
    log.info("ordering mix+constraint < mix < constraint < baseline held in %.0f%% of %d seeds",
             100 * order, len(grids))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="railgnss", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--config", help="YAML file with a 'filter' section of filter settings")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a scenario and run all four filter variants")
    s.add_argument("scenario", help="scenario YAML file, or 'straight' / 'curved'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("filter", help="run the filter over an observation file")
    f.add_argument("observations")
    f.add_argument("--track", help="GeoJSON track map")
    f.add_argument("--mixing", action="store_true")
    f.add_argument("--constraint", action="store_true")
    f.add_argument("--init", help="initial state file; default is a least-squares fix")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_filter)

    e = sub.add_parser("evaluate", help="distance-to-track and truth metrics for a trajectory")
    e.add_argument("trajectory")
    e.add_argument("--track", required=True)
    e.add_argument("--truth")
    e.add_argument("--steps", help="also write consecutive step distances here")
    e.set_defaults(func=cmd_evaluate)

    t = sub.add_parser("compare", help="mean RMSE grid over seeds, rows mixing on/off")
    t.add_argument("scenario")
    t.add_argument("--seeds", type=int, default=100)
    t.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, FileFormatError, ContractViolation) as exc:
        print(f"railgnss: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"railgnss: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (RailGnssError, ArithmeticError, ValueError, OSError) as exc:
        print(f"railgnss: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
