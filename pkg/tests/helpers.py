"""Shared simulation cache and the acceptance report collector."""

from __future__ import annotations

import json
from functools import lru_cache

import numpy as np

from wirssi.presets import preset, run_scenario

REPORT = []

NO_IMPAIRMENTS = {"timing_offset_std": 0.0, "cfo": False, "random_phase_offsets": False}
UNQUANTIZED = {"rssi_quantization_step_db": None}


def record(criterion, ok, text):
    """Store one acceptance line; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {text}"
    REPORT.append(line)
    return ok


@lru_cache(maxsize=None)
def _run(name, overrides_json):
    return run_scenario(preset(name, **json.loads(overrides_json)))


def run_preset(name, **overrides):
    """Cached ``run_scenario(preset(name, **overrides))``."""
    return _run(name, json.dumps(overrides, sort_keys=True))


def truth_at(truth, t):
    return np.column_stack([np.interp(t, truth.t, truth.x), np.interp(t, truth.t, truth.y)])
