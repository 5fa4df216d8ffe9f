"""Time-Doppler feature maps built from per-CPI Doppler-AoA spectra."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import AxisMismatch, DataError
from .spectrum import DopplerAoaSpectrum

TD_MAGIC = "WIRSSI-TD v1"

__all__ = [
    "TimeDopplerMap",
    "energy_map",
    "doppler_profile",
    "stack_time_doppler",
    "log_scale",
    "doppler_centroid",
    "write_td_binary",
    "read_td_binary",
    "write_td_csv",
    "read_td_csv",
    "TimeDopplerTransformer",
]


@dataclass
class TimeDopplerMap:
    """Nonnegative ``values[T, L_Doppler]``: one Doppler profile per CPI."""

    values: np.ndarray
    doppler_axis: np.ndarray
    cpi_timestamps: np.ndarray

    def __post_init__(self):
        self.doppler_axis = np.asarray(self.doppler_axis, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float).reshape(-1, len(self.doppler_axis))
        self.cpi_timestamps = np.asarray(self.cpi_timestamps, dtype=float).reshape(-1)
        if len(self.cpi_timestamps) != len(self.values):
            raise DataError(f"{len(self.values)} rows but {len(self.cpi_timestamps)} timestamps")
        if np.any(self.values < 0):
            raise DataError("time-Doppler map entries must be nonnegative")

    def __len__(self):
        return len(self.values)

    def log_scaled(self):
        return log_scale(self.values)

    def centroid(self):
        return doppler_centroid(self.values, self.doppler_axis)


def energy_map(spec):
    """``|Y|**2`` of a spectrum (or a raw complex array)."""
    vals = spec.values if isinstance(spec, DopplerAoaSpectrum) else np.asarray(spec)
    return np.abs(vals) ** 2


def doppler_profile(energy):
    """Sum the energy map over its AoA axis (last axis)."""
    return np.asarray(energy, dtype=float).sum(axis=-1)


def stack_time_doppler(profiles, doppler_axis, timestamps=None):
    """Stack per-CPI profiles into a map.

    ``profiles`` may be arrays, or ``(profile, axis)`` pairs whose axes must all
    equal ``doppler_axis``.
    """
    axis = np.asarray(doppler_axis, dtype=float)
    rows = []
    for p in profiles:
        if isinstance(p, tuple):
            p, ax = p
            ax = np.asarray(ax, dtype=float)
            if ax.shape != axis.shape or not np.array_equal(ax, axis):
                raise AxisMismatch("profile Doppler axis differs from the map axis")
        p = np.asarray(p, dtype=float).reshape(-1)
        if len(p) != len(axis):
            raise AxisMismatch(f"profile has {len(p)} bins, map axis has {len(axis)}")
        rows.append(p)
    values = np.vstack(rows) if rows else np.empty((0, len(axis)))
    ts = np.arange(len(rows), dtype=float) if timestamps is None else timestamps
    return TimeDopplerMap(values, axis, ts)


def log_scale(values):
    return 10.0 * np.log10(1.0 + np.asarray(values, dtype=float))


def doppler_centroid(values, doppler_axis):
    """Energy-weighted mean Doppler per row; NaN for all-zero rows."""
    v = np.atleast_2d(np.asarray(values, dtype=float))
    total = v.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, v @ np.asarray(doppler_axis, dtype=float) / total, np.nan)


def write_td_binary(tdm, path):
    """ASCII header ``WIRSSI-TD v1 T F`` then little-endian float32 row-major values."""
    t, f = tdm.values.shape
    with open(path, "wb") as fh:
        fh.write(f"{TD_MAGIC} {t} {f}\n".encode("ascii"))
        fh.write(tdm.values.astype("<f4").tobytes(order="C"))


def read_td_binary(path):
    """Return the ``(T, F)`` float32 matrix stored by ``write_td_binary``."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    head = raw[:nl].decode("ascii", errors="replace").split() if nl >= 0 else []
    magic = TD_MAGIC.split()
    if len(head) != len(magic) + 2 or head[: len(magic)] != magic or not all(v.isdigit() for v in head[-2:]):
        raise DataError(f"{path}: missing '{TD_MAGIC} T F' header")
    t, f = int(head[-2]), int(head[-1])
    body = raw[nl + 1 :]
    if len(body) != 4 * t * f:
        raise DataError(f"{path}: expected {4 * t * f} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(t, f).copy()


def write_td_csv(tdm, path):
    """CSV with header ``t_s,<doppler bins in Hz>``; values written as float32."""
    buf = io.StringIO()
    buf.write("t_s," + ",".join(f"{d:.6f}" for d in tdm.doppler_axis) + "\n")
    vals = tdm.values.astype(np.float32)
    for t, row in zip(tdm.cpi_timestamps, vals):
        buf.write(f"{t:.6f}," + ",".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_td_csv(path):
    """Return ``(values float32, doppler_axis, timestamps)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("t_s"):
        raise DataError(f"{path}: missing 't_s,...' header")
    axis = np.array([float(v) for v in lines[0].split(",")[1:]])
    rows = [np.array(ln.split(","), dtype=float) for ln in lines[1:] if ln.strip()]
    if not rows:
        return np.empty((0, len(axis)), dtype=np.float32), axis, np.empty(0)
    arr = np.vstack(rows)
    return arr[:, 1:].astype(np.float32), axis, arr[:, 0]


class TimeDopplerTransformer(BaseEstimator, TransformerMixin):
    """Spectra ``(n_cpi, L_Doppler, L_AoA)`` -> time-Doppler rows ``(n_cpi, L_Doppler)``."""

    def __init__(self, log=False):
        self.log = log

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X)
        if X.ndim != 3:
            raise DataError(f"expected (n_cpi, L_Doppler, L_AoA) spectra, got shape {X.shape}")
        p = doppler_profile(energy_map(X))
        return log_scale(p) if self.log else p
