"""Trace persistence: trajectory/edge tables and the run summary.

Two comma-separated tables plus a JSON summary per run.  All numbers are
written with 15 significant digits so re-reading reproduces the in-memory
values to well below analysis tolerances, and every file is a
deterministic function of the trace and report contents.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import ConvergenceReport
from .geometry import wrap_pi
from .scenario import ValidationRecord
from .simulation import SimulationTrace

SUMMARY_FORMAT = "formation-sim-summary/1"


def _fmt(x: float) -> str:
    return format(float(x), ".15g")


def write_trace(
    trace: SimulationTrace,
    out_dir,
    report: Optional[ConvergenceReport] = None,
    validation: Optional[ValidationRecord] = None,
) -> dict[str, Path]:
    """Write trajectory.csv, edges.csv, and summary.json into ``out_dir``.

    trajectory.csv columns: t, agent_id, x, y, rho, alpha, one row per
    agent per sample, agent ids 1-based, plus a row with agent_id 0 per
    sample for the target (rho/alpha left empty).  edges.csv columns:
    t, i, j, alpha_hat, spacing_error.  summary.json carries the run
    metadata, the validation record, and the convergence report.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out_dir / "trajectory.csv",
        "edges": out_dir / "edges.csv",
        "summary": out_dir / "summary.json",
    }

    n_samples = trace.times.shape[0]
    n_agents = trace.positions.shape[1] if trace.positions.ndim == 3 else 0
    with paths["trajectory"].open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "agent_id", "x", "y", "rho", "alpha"])
        for s in range(n_samples):
            t = _fmt(trace.times[s])
            writer.writerow(
                [t, 0, _fmt(trace.target_pos[s, 0]), _fmt(trace.target_pos[s, 1]),
                 "", ""]
            )
            for i in range(n_agents):
                writer.writerow([
                    t, i + 1,
                    _fmt(trace.positions[s, i, 0]), _fmt(trace.positions[s, i, 1]),
                    _fmt(trace.rho[s, i]), _fmt(trace.alpha[s, i]),
                ])

    spacing_err = wrap_pi(trace.alpha_hat - trace.edge_spacings[None, :]) \
        if n_samples else np.empty((0, trace.observation_pairs.shape[0]))
    with paths["edges"].open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "i", "j", "alpha_hat", "spacing_error"])
        for s in range(n_samples):
            t = _fmt(trace.times[s])
            for e, (i, j) in enumerate(trace.observation_pairs):
                writer.writerow([
                    t, int(i) + 1, int(j) + 1,
                    _fmt(trace.alpha_hat[s, e]), _fmt(spacing_err[s, e]),
                ])

    summary = {
        "format": SUMMARY_FORMAT,
        "metadata": trace.metadata,
        "validation": validation.as_dict() if validation is not None else None,
        "report": report.as_dict() if report is not None else None,
        "samples": int(n_samples),
        "agents": int(n_agents),
    }
    with paths["summary"].open("w") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return paths


def read_trajectory(path) -> dict[str, np.ndarray]:
    """Read a trajectory table back into arrays keyed by column meaning.

    Returns ``times`` (S,), ``target_pos`` (S, 2), ``positions`` (S, N, 2),
    ``rho`` and ``alpha`` (S, N).
    """
    times: list[float] = []
    target_rows: list[list[float]] = []
    agent_rows: dict[int, list[list[float]]] = {}
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            t = float(row["t"])
            agent = int(row["agent_id"])
            if agent == 0:
                times.append(t)
                target_rows.append([float(row["x"]), float(row["y"])])
            else:
                agent_rows.setdefault(agent, []).append(
                    [float(row["x"]), float(row["y"]),
                     float(row["rho"]), float(row["alpha"])]
                )
    n_agents = len(agent_rows)
    data = np.array([agent_rows[i + 1] for i in range(n_agents)])  # (N, S, 4)
    if data.size == 0:
        data = np.empty((0, len(times), 4))
    return {
        "times": np.array(times),
        "target_pos": np.array(target_rows).reshape(len(times), 2),
        "positions": np.transpose(data[:, :, :2], (1, 0, 2)),
        "rho": data[:, :, 2].T,
        "alpha": data[:, :, 3].T,
    }
