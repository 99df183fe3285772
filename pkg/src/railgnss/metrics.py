"""Trajectory metrics: distance to track, error to truth, step lengths."""

from dataclasses import dataclass
import csv
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .filtering import rms
from .io import fmt
from .track import TrackMap, distance_to_track


@dataclass
class MetricsReport:
    label: str
    rms_distance_to_track_m: float
    consecutive_step_distances_m: np.ndarray
    distances_to_track_m: np.ndarray
    rmse_to_truth_m: Optional[float] = None


def evaluate(positions, track: Optional[TrackMap], truth=None, label="") -> MetricsReport:
    """Metrics for an (n, 3) ECEF trajectory.

    ``track`` may be None, in which case track distances are NaN.
    """
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if p.shape[0] == 0:
        raise ContractViolation("trajectory is empty")
    if track is not None:
        d = np.array([distance_to_track(x, track) for x in p])
        rms_d = rms(d)
    else:
        d = np.full(p.shape[0], np.nan)
        rms_d = float("nan")
    steps = np.linalg.norm(np.diff(p, axis=0), axis=1)
    rmse = None
    if truth is not None:
        truth = np.asarray(truth, dtype=float).reshape(-1, 3)
        if truth.shape != p.shape:
            raise ContractViolation(f"truth has {truth.shape[0]} epochs, trajectory {p.shape[0]}")
        rmse = rms(np.linalg.norm(p - truth, axis=1))
    return MetricsReport(label, rms_d, steps, d, rmse)


SUMMARY_COLUMNS = ["label", "rmse_to_truth_m", "rms_distance_to_track_m", "n_epochs"]


def write_summary(path_or_file, reports) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in reports:
            w.writerow([r.label, "" if r.rmse_to_truth_m is None else fmt(r.rmse_to_truth_m),
                        fmt(r.rms_distance_to_track_m), len(r.distances_to_track_m)])
    finally:
        if own:
            fh.close()


def write_steps(path, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch_index", "step_distance_m"])
        for i, s in enumerate(report.consecutive_step_distances_m, start=1):
            w.writerow([i, fmt(s)])
