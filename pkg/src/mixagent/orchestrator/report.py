"""Run report directory: trajectory line, step time-series CSV, final learner, summary."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..core import TrajectoryRecord
from ..io import (
    canonical_json,
    read_csv,
    read_json,
    read_trajectories,
    trajectory_to_dict,
    write_bytes,
    write_csv,
    write_json,
)
from .guide import RunReport

TRAJECTORY_FILE = "trajectory.jsonl"
SERIES_FILE = "series.csv"
LEARNER_FILE = "learner.json"
SUMMARY_FILE = "summary.json"


def series_rows(report: RunReport, field_names) -> tuple[list[str], list[list]]:
    header = ["step"] + [f"raw_{f}" for f in field_names] + [f"std_{f}" for f in field_names] + \
        ["source_mass", "target_mass", "coverage", "source_samples"]
    masses = report.masses()
    rows = []
    for t in range(report.steps + 1):
        cov = report.coverage[t - 1] if t else 0
        src = report.source_samples[t - 1] if t else 0
        rows.append([t, *report.feedback[t].tolist(), *report.standardized[t].tolist(),
                     float(masses[t, 0]), float(masses[t, 1]), cov, src])
    return header, rows


def write_report(directory, report: RunReport, field_names, seed=None) -> dict[str, str]:
    """Write the report files; returns {file name: sha256}."""
    d = Path(directory)
    traj = TrajectoryRecord(report.start, report.actions, report.feedback,
                            {"seed": seed, "tier": report.label, "index": 0})
    hashes = {}
    hashes[TRAJECTORY_FILE] = write_bytes(
        d / TRAJECTORY_FILE,
        (canonical_json({**trajectory_to_dict(traj), "sampled": report.sampled.tolist()}) + "\n").encode())
    header, rows = series_rows(report, field_names)
    hashes[SERIES_FILE] = write_csv(d / SERIES_FILE, header, rows)
    hashes[LEARNER_FILE] = write_bytes(
        d / LEARNER_FILE,
        (canonical_json({"vocab": report.learner.vocab, "steps": report.learner.steps,
                         "params": {k: v for k, v in sorted(report.learner.params.items())}}) + "\n").encode())
    summary = report.summary()
    summary["space"] = report.space.to_dict()
    summary["report_hash"] = report.digest()
    hashes[SUMMARY_FILE] = write_json(d / SUMMARY_FILE, summary)
    return hashes


def read_report(directory) -> dict:
    d = Path(directory)
    traj = read_trajectories(d / TRAJECTORY_FILE)[0]
    return {
        "trajectory": traj,
        "series": read_csv(d / SERIES_FILE),
        "summary": read_json(d / SUMMARY_FILE),
        "final": np.asarray(traj.feedback[-1]),
    }
