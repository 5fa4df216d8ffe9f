"""Bistatic delay from the Doppler-AoA peak amplitude, and its calibration.

The peak magnitude is modelled as ``|Y| = gamma * tau_s / tau_x`` where
``tau_s`` is the Tx->Rx delay and ``tau_x`` the Tx->target->Rx delay. The
calibrated ``gamma`` is the pipeline-level constant: it absorbs the FFT
normalisation and cross-term gain because calibration runs through the same
processing chain as tracking.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._validation import as_point
from .exceptions import (
    BelowMagnitudeFloor,
    ConfigError,
    EmptyCalibration,
    RangeNotBistatic,
)
from .geometry import SPEED_OF_LIGHT, cartesian_to_polar

EPS_MAG = 1e-6
# a delay equal to the baseline delay (peak magnitude == gamma) is the valid fixed point
_BASELINE_RTOL = 1e-12

__all__ = [
    "ReflectionRatio",
    "CalibrationSample",
    "delay_from_amplitude",
    "delays_from_amplitudes",
    "calibrate_gamma",
    "relative_range_track",
    "save_calibration",
    "load_calibration",
]


@dataclass(frozen=True)
class ReflectionRatio:
    gamma: float
    sample_count: int = 1
    dispersion: float = 0.0
    median: float | None = None
    geometry_hash: str | None = None

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigError(f"gamma must be a positive finite number, got {self.gamma!r}")
        if self.dispersion < 0:
            raise ConfigError("dispersion must be >= 0")


@dataclass(frozen=True)
class CalibrationSample:
    peak_magnitude: float
    true_target_position: tuple
    cpi_timestamp: float = float("nan")

    def __post_init__(self):
        if not self.peak_magnitude > 0:
            raise ConfigError(f"peak_magnitude must be > 0, got {self.peak_magnitude!r}")


def _gamma_value(gamma):
    return gamma.gamma if isinstance(gamma, ReflectionRatio) else float(gamma)


def delay_from_amplitude(det, gamma, geo):
    """Invert ``|Y| = gamma * tau_s / tau_x`` for the bistatic delay ``tau_x``."""
    mag = det.peak_magnitude if hasattr(det, "peak_magnitude") else float(det)
    if not mag > EPS_MAG:
        raise BelowMagnitudeFloor(f"peak magnitude {mag:.3g} <= {EPS_MAG}")
    tau = _gamma_value(gamma) * geo.tau_s / mag
    if tau < geo.tau_s * (1.0 - _BASELINE_RTOL):
        raise RangeNotBistatic(f"bistatic range {tau * SPEED_OF_LIGHT:.4g} m < baseline {geo.d_s:.4g} m")
    return tau


def delays_from_amplitudes(magnitudes, gamma, geo):
    """Vectorised inversion; entries below the floor or not bistatic become NaN."""
    mag = np.asarray(magnitudes, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(mag > EPS_MAG, _gamma_value(gamma) * geo.tau_s / mag, np.nan)
    return np.where(tau >= geo.tau_s * (1.0 - _BASELINE_RTOL), tau, np.nan)


def calibrate_gamma(samples, geo):
    """Average the per-location ratios ``|Y| * tau_x / tau_s``.

    Positions are in the receiver-local frame. The mean is returned as
    ``gamma``; the median is kept for diagnostics.
    """
    samples = list(samples)
    if not samples:
        raise EmptyCalibration("no calibration samples")
    est = np.array(
        [
            s.peak_magnitude * cartesian_to_polar(as_point(s.true_target_position), geo).bistatic_delay / geo.tau_s
            for s in samples
        ]
    )
    return ReflectionRatio(
        gamma=float(est.mean()),
        sample_count=len(est),
        dispersion=float(est.std()),
        median=float(np.median(est)),
        geometry_hash=geo.hash(),
    )


def relative_range_track(magnitudes, geo):
    """``tau_s / |Y|`` per CPI: proportional to ``tau_x`` without knowing gamma.

    Returns ``(series, flagged)``; magnitudes under the floor give NaN and are
    flagged.
    """
    mag = np.asarray([getattr(m, "peak_magnitude", m) for m in magnitudes], dtype=float)
    flagged = ~(mag > EPS_MAG)
    with np.errstate(divide="ignore", invalid="ignore"):
        series = np.where(flagged, np.nan, geo.tau_s / mag)
    return series, flagged


def save_calibration(ratio, path):
    d = asdict(ratio)
    out = {
        "gamma": d["gamma"],
        "dispersion": d["dispersion"],
        "sample_count": d["sample_count"],
        "geometry_hash": d["geometry_hash"],
        "median": d["median"],
    }
    Path(path).write_text(json.dumps(out, indent=2) + "\n")


def load_calibration(path):
    try:
        d = json.loads(Path(path).read_text())
        return ReflectionRatio(
            gamma=float(d["gamma"]),
            sample_count=int(d.get("sample_count", 1)),
            dispersion=float(d.get("dispersion", 0.0)),
            median=d.get("median"),
            geometry_hash=d.get("geometry_hash"),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid calibration file ({exc})") from None
