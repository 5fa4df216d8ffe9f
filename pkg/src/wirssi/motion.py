"""Parametric target motions used by the simulator.

Every motion maps a time vector (seconds) to world-frame positions of shape
``(len(t), 2)``. Constant-speed motions are parametrised by arc length so the
speed is exact along straight segments and exact to table resolution on the
ellipse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_point, check_positive
from .exceptions import ConfigError


def _polyline_at(vertices, s, closed):
    """Point at arc length ``s`` along a polyline, ping-pong when open."""
    v = np.asarray(vertices, dtype=float)
    if closed:
        v = np.vstack([v, v[:1]])
    seg = np.diff(v, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    if total == 0.0:
        return np.repeat(v[:1], len(s), axis=0)
    if closed:
        s = np.mod(s, total)
    else:
        s = np.mod(s, 2.0 * total)
        s = np.where(s > total, 2.0 * total - s, s)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1.0)
    return v[idx] + frac[:, None] * seg[idx]


@dataclass(frozen=True)
class Stationary:
    point: tuple

    def positions(self, t):
        return np.repeat(as_point(self.point)[None, :], len(np.atleast_1d(t)), axis=0)


@dataclass(frozen=True)
class Ellipse:
    """Constant-speed lap around an ellipse; ``rotation`` in radians."""

    center: tuple
    semi_axes: tuple
    speed: float = 1.0
    rotation: float = 0.0
    start_angle: float = 0.0
    clockwise: bool = False

    def __post_init__(self):
        a, b = self.semi_axes
        check_positive(a, "semi_axes[0]")
        check_positive(b, "semi_axes[1]")
        check_positive(self.speed, "speed", strict=False)

    def _table(self):
        a, b = self.semi_axes
        phi = np.linspace(0.0, 2.0 * math.pi, 20001)
        dphi = np.hypot(a * np.sin(phi), b * np.cos(phi))
        s = np.concatenate([[0.0], np.cumsum(0.5 * (dphi[1:] + dphi[:-1]) * np.diff(phi))])
        return phi, s

    @property
    def perimeter(self):
        return float(self._table()[1][-1])

    def positions(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a, b = self.semi_axes
        phi_tab, s_tab = self._table()
        s = np.mod(self.speed * t, s_tab[-1])
        phi = np.interp(s, s_tab, phi_tab)
        phi = (-phi if self.clockwise else phi) + self.start_angle
        local = np.stack([a * np.cos(phi), b * np.sin(phi)], axis=-1)
        cr, sr = math.cos(self.rotation), math.sin(self.rotation)
        rot = np.array([[cr, sr], [-sr, cr]])
        return local @ rot + as_point(self.center)


@dataclass(frozen=True)
class Polyline:
    """Constant-speed walk along vertices; open paths ping-pong back and forth."""

    vertices: tuple
    speed: float = 1.0
    closed: bool = False

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ConfigError("polyline needs at least two vertices")
        check_positive(self.speed, "speed", strict=False)

    def positions(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return _polyline_at(self.vertices, self.speed * t, self.closed)


def Line(start, end, speed=1.0):
    """Back-and-forth walk between two points."""
    return Polyline((tuple(start), tuple(end)), speed=speed, closed=False)


def Rectangle(corner_min, corner_max, speed=1.0):
    """Axis-aligned rectangular loop starting at ``corner_min``."""
    (x0, y0), (x1, y1) = corner_min, corner_max
    if not (x1 > x0 and y1 > y0):
        raise ConfigError("rectangle corners must satisfy max > min on both axes")
    return Polyline(((x0, y0), (x1, y0), (x1, y1), (x0, y1)), speed=speed, closed=True)


@dataclass(frozen=True)
class Oscillation:
    """Sinusoidal back-and-forth motion along ``direction`` (push-pull gesture)."""

    center: tuple
    direction: tuple
    amplitude: float
    period: float

    def positions(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        d = as_point(self.direction)
        d = d / np.hypot(*d)
        off = self.amplitude * np.sin(2.0 * math.pi * t / self.period)
        return as_point(self.center) + off[:, None] * d


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float
    period: float

    def positions(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = 2.0 * math.pi * t / self.period
        return as_point(self.center) + self.radius * np.stack([np.cos(w), np.sin(w)], axis=-1)


def motion_from_dict(d):
    """Build a motion from its JSON description (``{"kind": ..., ...}``)."""
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "ellipse":
            if "rotation_deg" in d:
                d["rotation"] = math.radians(d.pop("rotation_deg"))
            return Ellipse(center=tuple(d.pop("center")), semi_axes=tuple(d.pop("semi_axes")), **d)
        if kind == "line":
            return Line(d["start"], d["end"], d.get("speed", 1.0))
        if kind == "rectangle":
            return Rectangle(d["corner_min"], d["corner_max"], d.get("speed", 1.0))
        if kind == "waypoints":
            return Polyline(tuple(map(tuple, d["points"])), d.get("speed", 1.0), d.get("closed", False))
        if kind == "oscillation":
            return Oscillation(tuple(d["center"]), tuple(d["direction"]), d["amplitude"], d["period"])
        if kind == "circle":
            return Circle(tuple(d["center"]), d["radius"], d["period"])
        if kind == "stationary":
            return Stationary(tuple(d["point"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"trajectory {kind!r}: bad or missing field {exc}") from None
    raise ConfigError(f"unknown trajectory kind {kind!r}")
