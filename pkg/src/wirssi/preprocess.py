"""RSSI traces, static-clutter removal and per-CPI normalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_fraction, check_int, check_matrix
from .exceptions import ConfigError, DataError, ZeroStaticPower

DEFAULT_CPI_LENGTH = 128
DEFAULT_STEP = 32
DEFAULT_EMA_WEIGHT = 0.3
EMA_RATE_THRESHOLD_HZ = 200.0
MAX_HOLD_RUN = 4  # missing runs shorter than 5 samples are held

__all__ = [
    "RssiTrace",
    "CpiWindow",
    "GapStats",
    "db_to_linear",
    "normalize_window",
    "extract_cpi",
    "extract_cpi_ema",
    "iter_cpis",
    "regularize",
    "ClutterRemover",
]


def db_to_linear(db):
    """Hardware-reported dB -> linear power."""
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0)


@dataclass
class RssiTrace:
    """Per-antenna RSSI in dB, shape ``(N antennas, M samples)``.

    NaN marks a missing reading; ``regularize`` decides what to do with it.
    """

    timestamps: np.ndarray
    samples_db: np.ndarray
    sample_rate: float | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        self.samples_db = check_matrix(self.samples_db, "samples_db", allow_nan=True)
        if self.samples_db.shape[1] != len(self.timestamps):
            raise DataError(
                f"samples_db has {self.samples_db.shape[1]} columns but "
                f"{len(self.timestamps)} timestamps"
            )
        if np.any(np.diff(self.timestamps) <= 0):
            raise DataError("timestamps must be strictly increasing")
        if np.any(np.isinf(self.samples_db)):
            raise DataError("samples_db contains infinite values")
        if self.sample_rate is None:
            if len(self.timestamps) >= 2:
                self.sample_rate = 1.0 / float(np.median(np.diff(self.timestamps)))
            else:
                self.sample_rate = 1000.0

    @property
    def num_antennas(self):
        return self.samples_db.shape[0]

    @property
    def sample_interval(self):
        return 1.0 / self.sample_rate

    def __len__(self):
        return len(self.timestamps)

    def linear(self):
        return db_to_linear(self.samples_db)

    def scaled(self, factor):
        """Same trace with linear power multiplied by ``factor``."""
        return RssiTrace(self.timestamps, self.samples_db + 10.0 * np.log10(factor), self.sample_rate)


@dataclass
class CpiWindow:
    normalized_dynamic: np.ndarray
    static_estimate: np.ndarray
    start_index: int
    cpi_length: int
    timestamp: float
    sample_interval: float


@dataclass
class GapStats:
    missing_samples: int = 0
    held_samples: int = 0
    invalid_samples: int = 0
    dropped_cpis: int = 0

    def to_dict(self):
        return {k: int(v) for k, v in self.__dict__.items()}


def regularize(trace):
    """Place a trace on a uniform grid and apply the gap policy.

    Missing readings (absent timestamps or NaN values) are filled by holding
    the previous value when the run is shorter than five samples; longer runs
    are marked invalid so the CPIs covering them get dropped.

    Returns ``(samples_db, timestamps, valid, stats)`` on the uniform grid.
    """
    dt = trace.sample_interval
    t0 = trace.timestamps[0]
    idx = np.rint((trace.timestamps - t0) / dt).astype(np.int64)
    if np.any(np.diff(idx) <= 0):
        raise DataError("timestamps collide on the nominal sample grid")
    n = int(idx[-1]) + 1
    grid = np.full((trace.num_antennas, n), np.nan)
    grid[:, idx] = trace.samples_db
    missing = np.isnan(grid)
    stats = GapStats(missing_samples=int(missing.sum()))
    valid = np.ones(n, dtype=bool)
    for row, miss in zip(grid, missing):
        if not miss.any():
            continue
        # run-length encode the missing mask
        edges = np.flatnonzero(np.diff(np.concatenate([[0], miss.view(np.int8), [0]])))
        for s, e in zip(edges[::2], edges[1::2]):
            if s > 0 and e - s <= MAX_HOLD_RUN:
                row[s:e] = row[s - 1]
                stats.held_samples += e - s
            else:
                valid[s:e] = False
                stats.invalid_samples += e - s
    return grid, t0 + np.arange(n) * dt, valid, stats


def normalize_window(linear):
    """CPI-mean clutter suppression on an ``(N, M)`` block of linear power.

    Returns ``(normalized_dynamic, static_estimate)``.
    """
    static = linear.mean(axis=1)
    if np.any(~(static > 0)):
        raise ZeroStaticPower(f"non-positive static estimate {static}")
    return (linear - static[:, None]) / static[:, None], static


def extract_cpi(trace, start, cpi_length=DEFAULT_CPI_LENGTH):
    """One CPI window of ``trace`` starting at sample ``start``."""
    check_int(cpi_length, "cpi_length", minimum=2)
    if start < 0 or start + cpi_length > len(trace):
        raise DataError(f"window [{start}, {start + cpi_length}) outside trace of {len(trace)} samples")
    return _mean_window(trace.linear(), trace.timestamps, start, cpi_length, trace.sample_interval)


def _mean_window(linear, timestamps, start, cpi_length, dt):
    sl = slice(start, start + cpi_length)
    dyn, static = normalize_window(linear[:, sl])
    return CpiWindow(
        normalized_dynamic=dyn,
        static_estimate=static,
        start_index=start,
        cpi_length=cpi_length,
        timestamp=float(timestamps[sl].mean()),
        sample_interval=dt,
    )


def ema_static(linear, ema_weight=DEFAULT_EMA_WEIGHT, initial=None):
    """Online static estimate ``S_k = w R_k + (1 - w) S_{k-1}`` per antenna."""
    w = check_fraction(ema_weight, "ema_weight")
    linear = np.atleast_2d(linear)
    s_prev = linear[:, 0] if initial is None else np.broadcast_to(np.asarray(initial, dtype=float), linear.shape[:1])
    zi = ((1.0 - w) * s_prev)[:, None]
    out, _ = lfilter([w], [1.0, -(1.0 - w)], linear, axis=1, zi=zi)
    return out


def extract_cpi_ema(trace, ema_weight=DEFAULT_EMA_WEIGHT, cpi_length=DEFAULT_CPI_LENGTH,
                    step=DEFAULT_STEP, initial=None):
    """Yield CPI windows normalised against an exponential moving average.

    ``static_estimate`` of each window is the EMA at the window's last sample.
    """
    check_int(cpi_length, "cpi_length", minimum=2)
    check_int(step, "step", minimum=1)
    lin = trace.linear()
    s = ema_static(lin, ema_weight, initial)
    if np.any(~(s > 0)):
        raise ZeroStaticPower("non-positive EMA static estimate")
    resid = (lin - s) / s
    for start in range(0, len(trace) - cpi_length + 1, step):
        sl = slice(start, start + cpi_length)
        yield CpiWindow(
            normalized_dynamic=resid[:, sl],
            static_estimate=s[:, start + cpi_length - 1],
            start_index=start,
            cpi_length=cpi_length,
            timestamp=float(trace.timestamps[sl].mean()),
            sample_interval=trace.sample_interval,
        )


def resolve_mode(mode, sample_rate):
    if mode == "auto":
        return "ema" if sample_rate < EMA_RATE_THRESHOLD_HZ else "mean"
    if mode not in ("mean", "ema"):
        raise ConfigError(f"preprocess mode must be auto, mean or ema, got {mode!r}")
    return mode


def iter_cpis(trace, cpi_length=DEFAULT_CPI_LENGTH, step=DEFAULT_STEP, mode="auto",
              ema_weight=DEFAULT_EMA_WEIGHT, stats=None):
    """Regularise ``trace`` and yield every complete, gap-free CPI window."""
    check_int(cpi_length, "cpi_length", minimum=2)
    check_int(step, "step", minimum=1)
    if len(trace) < cpi_length:
        return
    grid, ts, valid, gap = regularize(trace)
    if stats is not None:
        stats.__dict__.update(gap.__dict__)
    mode = resolve_mode(mode, trace.sample_rate)
    # invalid samples carry NaN; hold a neutral value so the EMA stays finite
    filled = np.where(np.isnan(grid), np.nanmean(grid, axis=1, keepdims=True), grid)
    regular = RssiTrace(ts, filled, trace.sample_rate)
    bad = np.concatenate([[0], np.cumsum(~valid)])
    if mode == "ema":
        windows = extract_cpi_ema(regular, ema_weight, cpi_length, step)
    else:
        lin = regular.linear()
        windows = (
            _mean_window(lin, ts, s, cpi_length, regular.sample_interval)
            for s in range(0, len(regular) - cpi_length + 1, step)
        )
    for w in windows:
        if bad[w.start_index + cpi_length] - bad[w.start_index]:
            if stats is not None:
                stats.dropped_cpis += 1
            continue
        yield w


class ClutterRemover(BaseEstimator, TransformerMixin):
    """Turn an ``RssiTrace`` into stacked normalised CPI residues.

    ``transform`` returns an array of shape ``(n_cpi, N, M)``; window start
    times land in ``timestamps_`` and the gap policy counters in ``gap_stats_``.
    """

    def __init__(self, cpi_length=DEFAULT_CPI_LENGTH, step=DEFAULT_STEP, mode="auto",
                 ema_weight=DEFAULT_EMA_WEIGHT):
        self.cpi_length = cpi_length
        self.step = step
        self.mode = mode
        self.ema_weight = ema_weight

    def fit(self, X=None, y=None):
        check_int(self.cpi_length, "cpi_length", minimum=2)
        check_int(self.step, "step", minimum=1)
        check_fraction(self.ema_weight, "ema_weight")
        resolve_mode(self.mode, 1000.0)
        return self

    def transform(self, X):
        if not isinstance(X, RssiTrace):
            raise DataError("ClutterRemover expects an RssiTrace")
        self.gap_stats_ = GapStats()
        windows = list(iter_cpis(X, self.cpi_length, self.step, self.mode, self.ema_weight, self.gap_stats_))
        self.timestamps_ = np.array([w.timestamp for w in windows])
        self.windows_ = windows
        if not windows:
            return np.empty((0, X.num_antennas, self.cpi_length))
        return np.stack([w.normalized_dynamic for w in windows])
