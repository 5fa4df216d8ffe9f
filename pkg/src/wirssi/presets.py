"""Simulation scenarios: geometry, target motion, channel and planted gamma.

A scenario is plain JSON::

    {
      "name": "ellipse",
      "geometry": {"tx_m": [..], "rx_m": [..], "array_axis": [..], "num_antennas": 3,
                   "antenna_spacing_m": null, "carrier_hz": 5.32e9},
      "trajectory": {"kind": "ellipse", "center": [..], "semi_axes": [..], "speed": 1.0},
      "gamma": 0.4,
      "static_coefficient": 1e-8,
      "duration_s": 60.0,
      "seed": 1,
      "channel": {"rssi_quantization_step_db": 1.0, ...},
      "impairments": {"timing_offset_std": 5e-8, ...}
    }

``gamma`` is the planted reflection-coefficient ratio: the dynamic path
coefficient is chosen so the time average of ``zeta * Gamma_X / Gamma_S`` over
the run equals it.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ._validation import check_positive
from .exceptions import ConfigError
from .geometry import SPEED_OF_LIGHT, BistaticGeometry, local_to_bistatic
from .motion import motion_from_dict
from .simulator import ChannelConfig, ImpairmentConfig, PathSpec, simulate

__all__ = ["Scenario", "PRESETS", "preset", "load_scenario", "run_scenario", "planted_coefficient"]

# Rx at the origin with its array along +x; Tx 2.3 m away at 20 degrees off broadside.
_GEOMETRY = {"tx_m": [0.7866, 2.1613], "rx_m": [0.0, 0.0], "array_axis": [1.0, 0.0], "num_antennas": 3,
             "antenna_spacing_m": None, "carrier_hz": 5.32e9}

PRESETS = {
    "ellipse": {
        "trajectory": {"kind": "ellipse", "center": [2.6, 2.6], "semi_axes": [0.5, 1.5], "speed": 1.0},
        "gamma": 0.4,
    },
    "line": {
        "trajectory": {"kind": "line", "start": [2.2, 0.6], "end": [2.2, 3.6], "speed": 1.0},
        "gamma": 0.4,
    },
    "rectangle": {
        "trajectory": {"kind": "rectangle", "corner_min": [2.2, 0.4], "corner_max": [3.2, 3.4], "speed": 1.0},
        "gamma": 0.4,
    },
    "pushpull": {
        "trajectory": {"kind": "oscillation", "center": [2.6, 2.6], "direction": [1.0, 1.0],
                       "amplitude": 0.4, "period": 4.0},
        "gamma": 0.4,
        "duration_s": 20.0,
        "channel": {"rssi_quantization_step_db": None},
    },
    "circle": {
        "trajectory": {"kind": "circle", "center": [2.8, 2.4], "radius": 0.3, "period": 2.0},
        "gamma": 0.4,
        "duration_s": 20.0,
        "channel": {"rssi_quantization_step_db": None},
    },
}


def _dataclass_from(cls, d, what):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{what}: unknown field(s) {sorted(unknown)}")
    d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{what}: {exc}") from None


@dataclass
class Scenario:
    name: str
    geometry: dict
    trajectory: dict
    gamma: float = 0.4
    static_coefficient: float = 1e-8
    duration_s: float = 60.0
    seed: int = 1
    channel: dict = field(default_factory=dict)
    impairments: dict = field(default_factory=dict)

    def __post_init__(self):
        check_positive(self.gamma, "gamma")
        check_positive(self.static_coefficient, "static_coefficient")
        check_positive(self.duration_s, "duration_s")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        # fail early on malformed sections
        self.build_geometry()
        self.build_motion()
        self.build_channel()
        self.build_impairments()

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"scenario: unknown field(s) {sorted(unknown)}")
        for key in ("geometry", "trajectory"):
            if key not in d:
                raise ConfigError(f"scenario: missing field {key!r}")
        d.setdefault("name", d["trajectory"].get("kind", "custom"))
        return cls(**d)

    def to_dict(self):
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def build_geometry(self):
        return BistaticGeometry.from_dict(self.geometry)

    def build_motion(self):
        return motion_from_dict(self.trajectory)

    def build_channel(self):
        return _dataclass_from(ChannelConfig, self.channel, "channel")

    def build_impairments(self):
        d = dict(self.impairments)
        d.setdefault("seed", self.seed)
        return _dataclass_from(ImpairmentConfig, d, "impairments")

    def sample_times(self):
        cfg = self.build_channel()
        return np.arange(int(round(self.duration_s / cfg.sample_interval))) * cfg.sample_interval


def preset(name, **overrides):
    """Scenario for a named preset; keyword overrides replace top-level fields."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    d = {"name": name, "geometry": dict(_GEOMETRY), **copy.deepcopy(PRESETS[name])}
    d.update(overrides)
    return Scenario.from_dict(d)


def load_scenario(path):
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    if "preset" in d:
        name = d.pop("preset")
        return preset(name, **d)
    return Scenario.from_dict(d)


def planted_coefficient(scenario):
    """``Gamma_X`` making the run-average of ``zeta Gamma_X / Gamma_S`` equal ``gamma``."""
    geo = scenario.build_geometry()
    pts = scenario.build_motion().positions(scenario.sample_times())
    _, _, d_tx, d_rx = local_to_bistatic(geo.to_local(pts), geo)
    zeta = np.mean(SPEED_OF_LIGHT / d_tx + SPEED_OF_LIGHT / d_rx)
    return scenario.gamma * scenario.static_coefficient / float(zeta)


def run_scenario(scenario, keep_csi=False):
    geo = scenario.build_geometry()
    paths = [
        PathSpec("static", scenario.static_coefficient),
        PathSpec("dynamic", planted_coefficient(scenario), motion=scenario.build_motion()),
    ]
    return simulate(geo, paths, scenario.build_channel(), scenario.build_impairments(),
                    scenario.duration_s, seed=scenario.seed, keep_csi=keep_csi)
