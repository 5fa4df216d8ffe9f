"""Bistatic coordinate system and the polar <-> Cartesian target solve.

Local frame: the receive array phase centre is the origin, the antenna line is
the +x axis and the sensing half-plane is y > 0. Angles are measured from
array broadside (+y) towards +x, so a point at distance ``r`` and angle
``theta`` sits at ``(r sin theta, r cos theta)``.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from ._validation import as_point, check_int, check_positive
from .exceptions import (
    BlindConfigurationWarning,
    CoincidentPoint,
    ConfigError,
    DegenerateGeometry,
    InvalidRange,
)

EPS_DENOM = 1e-6
EPS_BLIND = 0.05
_EPS_COINCIDENT = 1e-12

__all__ = [
    "SPEED_OF_LIGHT",
    "BistaticGeometry",
    "PolarDetection",
    "solve_target_range",
    "polar_to_cartesian",
    "cartesian_to_polar",
    "bistatic_to_local",
    "local_to_bistatic",
    "load_geometry",
    "save_geometry",
]


@dataclass(frozen=True)
class BistaticGeometry:
    """Tx/Rx placement, array orientation and carrier.

    Positions are given in an arbitrary world frame; ``to_local`` maps them to
    the receiver frame used by every estimator. ``antenna_spacing=None`` means
    half a carrier wavelength.
    """

    tx_position: tuple = (0.7866, 2.1613)
    rx_origin: tuple = (0.0, 0.0)
    array_axis: tuple = (1.0, 0.0)
    num_antennas: int = 3
    antenna_spacing: float | None = None
    carrier_frequency: float = 5.32e9
    theta_s: float = field(init=False)
    d_s: float = field(init=False)

    def __post_init__(self):
        tx = as_point(self.tx_position, "tx_position")
        rx = as_point(self.rx_origin, "rx_origin")
        axis = as_point(self.array_axis, "array_axis")
        norm = float(np.hypot(*axis))
        if norm == 0.0:
            raise ConfigError("array_axis must be non-zero")
        axis = axis / norm
        check_int(self.num_antennas, "num_antennas", minimum=2)
        check_positive(self.carrier_frequency, "carrier_frequency")
        spacing = self.antenna_spacing
        if spacing is None:
            spacing = SPEED_OF_LIGHT / self.carrier_frequency / 2.0
        check_positive(spacing, "antenna_spacing")

        set_ = object.__setattr__
        set_(self, "tx_position", (float(tx[0]), float(tx[1])))
        set_(self, "rx_origin", (float(rx[0]), float(rx[1])))
        set_(self, "array_axis", (float(axis[0]), float(axis[1])))
        set_(self, "antenna_spacing", float(spacing))

        tx_local = self.to_local(tx)
        d_s = float(np.hypot(*tx_local))
        if d_s <= 0.0:
            raise ConfigError("transmitter and receiver coincide")
        if tx_local[1] < -1e-12:
            raise ConfigError(
                "transmitter lies behind the receive array (local y < 0); "
                "flip array_axis so the transmitter is in the y >= 0 half-plane"
            )
        set_(self, "d_s", d_s)
        set_(self, "theta_s", float(math.atan2(tx_local[0], max(tx_local[1], 0.0))))

    # -- frames -------------------------------------------------------------

    @property
    def _perp(self):
        ax, ay = self.array_axis
        return (-ay, ax)

    def to_local(self, points):
        """World -> receiver-local coordinates (works on ``(..., 2)`` arrays)."""
        p = np.asarray(points, dtype=float) - np.asarray(self.rx_origin)
        return np.stack([p @ np.asarray(self.array_axis), p @ np.asarray(self._perp)], axis=-1)

    def to_world(self, points):
        p = np.asarray(points, dtype=float)
        basis = np.array([self.array_axis, self._perp])
        return p @ basis + np.asarray(self.rx_origin)

    @property
    def tx_local(self):
        return self.to_local(self.tx_position)

    # -- derived quantities -------------------------------------------------

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def tau_s(self):
        """Static Tx->Rx propagation delay in seconds."""
        return self.d_s / SPEED_OF_LIGHT

    @property
    def spatial_phase_step(self):
        """Inter-element phase per unit sin(theta); pi for half-wavelength spacing."""
        return 2.0 * math.pi * self.antenna_spacing / self.wavelength

    @property
    def is_blind(self):
        return abs(math.sin(self.theta_s)) < EPS_BLIND

    def warn_if_blind(self):
        if self.is_blind:
            warnings.warn(
                f"|sin(theta_s)| = {abs(math.sin(self.theta_s)):.3g} < {EPS_BLIND}: "
                "the transmitter gives no spatial phase reference and the "
                "Doppler-AoA mirror cannot be resolved",
                BlindConfigurationWarning,
                stacklevel=3,
            )

    # -- serialisation ------------------------------------------------------

    def to_dict(self):
        return {
            "tx_m": list(self.tx_position),
            "rx_m": list(self.rx_origin),
            "array_axis": list(self.array_axis),
            "num_antennas": self.num_antennas,
            "antenna_spacing_m": self.antenna_spacing,
            "carrier_hz": self.carrier_frequency,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                tx_position=tuple(d["tx_m"]),
                rx_origin=tuple(d.get("rx_m", (0.0, 0.0))),
                array_axis=tuple(d.get("array_axis", (1.0, 0.0))),
                num_antennas=d.get("num_antennas", 3),
                antenna_spacing=d.get("antenna_spacing_m"),
                carrier_frequency=d.get("carrier_hz", 5.32e9),
            )
        except KeyError as exc:
            raise ConfigError(f"geometry: missing field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ConfigError(f"geometry: {exc}") from None

    def hash(self):
        """Stable short digest used to tie calibrations to a deployment."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_geometry(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return BistaticGeometry.from_dict(data)


def save_geometry(geo, path):
    Path(path).write_text(json.dumps(geo.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class PolarDetection:
    """Bistatic range (Tx -> target -> Rx, metres) and target AoA (radians)."""

    bistatic_range: float
    aoa: float

    @classmethod
    def from_delay(cls, bistatic_delay, aoa):
        return cls(float(bistatic_delay) * SPEED_OF_LIGHT, float(aoa))

    @property
    def bistatic_delay(self):
        return self.bistatic_range / SPEED_OF_LIGHT


def bistatic_to_local(bistatic_range, aoa, geo):
    """Vectorised law-of-cosines solve.

    Returns ``(points, target_rx_distance, valid)``; invalid entries (range not
    longer than the baseline, or a vanishing denominator) are NaN.
    """
    dx = np.asarray(bistatic_range, dtype=float)
    th = np.asarray(aoa, dtype=float)
    denom = 2.0 * (dx - geo.d_s * np.cos(th - geo.theta_s))
    valid = (dx > geo.d_s) & (denom > 2.0 * EPS_DENOM) & np.isfinite(dx) & np.isfinite(th)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(valid, (dx**2 - geo.d_s**2) / denom, np.nan)
    pts = np.stack([r * np.sin(th), r * np.cos(th)], axis=-1)
    return pts, r, valid


def local_to_bistatic(points, geo):
    """Forward model: local points ``(..., 2)`` -> (bistatic range, AoA, d_tx, d_rx)."""
    p = np.asarray(points, dtype=float)
    d_rx = np.hypot(p[..., 0], p[..., 1])
    tx = geo.tx_local
    d_tx = np.hypot(p[..., 0] - tx[0], p[..., 1] - tx[1])
    aoa = np.arctan2(p[..., 0], p[..., 1])
    return d_tx + d_rx, aoa, d_tx, d_rx


def solve_target_range(det, geo):
    """Target-to-receiver distance from bistatic range and AoA (law of cosines)."""
    dx, th = det.bistatic_range, det.aoa
    if not dx > geo.d_s:
        raise InvalidRange(f"bistatic range {dx:.6g} m <= baseline {geo.d_s:.6g} m")
    denom = dx - geo.d_s * math.cos(th - geo.theta_s)
    if denom <= EPS_DENOM:
        raise DegenerateGeometry(f"denominator {denom:.3g} m <= {EPS_DENOM}")
    return (dx * dx - geo.d_s * geo.d_s) / (2.0 * denom)


def polar_to_cartesian(det, geo):
    r = solve_target_range(det, geo)
    return np.array([r * math.sin(det.aoa), r * math.cos(det.aoa)])


def cartesian_to_polar(point, geo):
    """Local-frame point -> ``PolarDetection``."""
    p = as_point(point)
    tx = geo.tx_local
    d_rx = math.hypot(p[0], p[1])
    d_tx = math.hypot(p[0] - tx[0], p[1] - tx[1])
    if d_rx < _EPS_COINCIDENT or d_tx < _EPS_COINCIDENT:
        raise CoincidentPoint(f"point {tuple(p)} coincides with a terminal")
    return PolarDetection(d_tx + d_rx, math.atan2(p[0], p[1]))
