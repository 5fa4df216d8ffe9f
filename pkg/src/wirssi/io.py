"""CSV / JSON readers and writers for traces, trajectories and reports.

All writers produce byte-identical files for identical inputs: fixed float
formatting, ``\\n`` line endings, sorted JSON keys where order is not meaningful.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .preprocess import RssiTrace
from .tracking import Trajectory

__all__ = [
    "write_trace_csv",
    "read_trace_csv",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_json",
    "write_error_report",
    "write_cdf_csv",
    "write_spectrum_csv",
]


def _fmt(v):
    """Shortest round-trip text for a float."""
    return "nan" if math.isnan(v) else repr(float(v))


def write_trace_csv(trace, path):
    """``t_s,rssi_db_a1..aN``, one row per sample; NaN readings written as ``nan``."""
    n = trace.num_antennas
    lines = ["t_s," + ",".join(f"rssi_db_a{i + 1}" for i in range(n))]
    db = trace.samples_db
    for k, t in enumerate(trace.timestamps):
        lines.append(f"{t:.6f}," + ",".join(_fmt(float(v)) for v in db[:, k]))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_table(path, first):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows or rows[0][0].strip() != first:
        raise DataError(f"{path}: expected a header starting with '{first}'")
    header = [c.strip() for c in rows[0]]
    body = []
    for ln, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: line {ln}: expected {len(header)} columns, found {len(r)}")
        try:
            body.append([float(c) if c.strip() else float("nan") for c in r])
        except ValueError:
            raise DataError(f"{path}: line {ln}: non-numeric value") from None
    arr = np.array(body, dtype=float).reshape(-1, len(header))
    return header, arr


def read_trace_csv(path, sample_rate=None):
    header, arr = _read_table(path, "t_s")
    if len(header) < 2 or not all(h.startswith("rssi_db_a") for h in header[1:]):
        raise DataError(f"{path}: columns must be t_s,rssi_db_a1..aN")
    if np.isnan(arr[:, 0]).any():
        raise DataError(f"{path}: missing timestamp")
    return RssiTrace(arr[:, 0], arr[:, 1:].T, sample_rate)


def write_trajectory_csv(traj, path):
    lines = ["t_s,x_m,y_m"]
    lines += [f"{t:.6f},{x:.6f},{y:.6f}" for t, (x, y) in zip(traj.t, traj.xy)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path, kind="raw"):
    header, arr = _read_table(path, "t_s")
    if header[:3] != ["t_s", "x_m", "y_m"]:
        raise DataError(f"{path}: columns must be t_s,x_m,y_m")
    return Trajectory(arr[:, 0], arr[:, 1:3], kind=kind)


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_error_report(report, path):
    write_json(report.to_dict(), path)


def write_cdf_csv(report, path):
    """``error_xy_m,cdf`` with empirical CDF ``k / n``."""
    n = len(report.cdf)
    lines = ["error_xy_m,cdf"]
    lines += [f"{e:.6f},{(k + 1) / n:.6f}" for k, e in enumerate(report.cdf)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_spectrum_csv(spec, path):
    """Magnitude of one Doppler-AoA spectrum: ``doppler_hz,aoa_deg,magnitude`` rows."""
    mag = np.abs(spec.values)
    lines = ["doppler_hz,aoa_deg,magnitude"]
    aoa_deg = np.degrees(spec.aoa_axis)
    for i, f in enumerate(spec.doppler_axis):
        for j, a in enumerate(aoa_deg):
            lines.append(f"{f:.6f},{a:.6f},{mag[i, j]:.9e}")
    Path(path).write_text("\n".join(lines) + "\n")
