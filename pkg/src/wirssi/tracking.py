"""Detections -> Cartesian trajectory, outlier removal, smoothing and scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import savgol_coeffs
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_int, check_positive
from .exceptions import DataError, NoTemporalOverlap, SeriesTooShort
from .geometry import SPEED_OF_LIGHT, bistatic_to_local

MAD_SCALE = 1.4826
ZERO_MAD_TOL = 1e-9

__all__ = [
    "Trajectory",
    "SmootherConfig",
    "ErrorReport",
    "localize",
    "hampel_filter",
    "savitzky_golay",
    "smooth_trajectory",
    "score",
    "HampelFilter",
    "SavitzkyGolaySmoother",
]


@dataclass
class Trajectory:
    """Time-stamped 2D positions; ``kind`` is raw, smoothed or ground_truth."""

    t: np.ndarray
    xy: np.ndarray
    kind: str = "raw"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if len(self.t) != len(self.xy):
            raise DataError(f"{len(self.t)} timestamps but {len(self.xy)} points")
        if np.any(np.diff(self.t) < 0):
            raise DataError("trajectory timestamps must be non-decreasing")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.xy))):
            raise DataError("trajectory contains non-finite values")

    def __len__(self):
        return len(self.t)

    @property
    def x(self):
        return self.xy[:, 0]

    @property
    def y(self):
        return self.xy[:, 1]


@dataclass(frozen=True)
class SmootherConfig:
    hampel_window: int = 7
    hampel_threshold: float = 1.0
    sg_window: int = 101
    sg_order: int = 2

    def __post_init__(self):
        check_int(self.hampel_window, "hampel_window", minimum=3, odd=True)
        check_positive(self.hampel_threshold, "hampel_threshold", strict=False)
        check_int(self.sg_order, "sg_order", minimum=0)
        check_int(self.sg_window, "sg_window", minimum=self.sg_order + 1, odd=True)


@dataclass
class ErrorReport:
    err_x: np.ndarray
    err_y: np.ndarray
    err_xy: np.ndarray
    median_x: float
    median_y: float
    median_xy: float
    p90_x: float
    p90_y: float
    p90_xy: float
    cdf: np.ndarray = field(repr=False)

    def to_dict(self):
        return {
            "n_points": int(len(self.err_xy)),
            "median_x_m": self.median_x,
            "median_y_m": self.median_y,
            "median_xy_m": self.median_xy,
            "p90_x_m": self.p90_x,
            "p90_y_m": self.p90_y,
            "p90_xy_m": self.p90_xy,
            "cdf_xy_m": [float(v) for v in self.cdf],
        }


def localize(aoa, delays, timestamps, geo):
    """Map per-CPI (AoA, bistatic delay) pairs to a raw world-frame trajectory.

    Entries that cannot be solved (NaN delay, range not exceeding the baseline,
    degenerate denominator) are dropped. Returns ``(trajectory, n_dropped)``.
    """
    aoa = np.asarray(aoa, dtype=float)
    delays = np.asarray(delays, dtype=float)
    ts = np.asarray(timestamps, dtype=float)
    if not (len(aoa) == len(delays) == len(ts)):
        raise DataError("aoa, delays and timestamps must be aligned")
    if len(ts) == 0:
        return Trajectory(np.empty(0), np.empty((0, 2))), 0
    pts, _, valid = bistatic_to_local(delays * SPEED_OF_LIGHT, aoa, geo)
    world = geo.to_world(pts[valid])
    return Trajectory(ts[valid], world, kind="raw"), int(np.count_nonzero(~valid))


def hampel_filter(series, window=7, threshold=1.0):
    """Replace points far from their windowed median by that median.

    A point is an outlier when ``|x - median| > threshold * 1.4826 * MAD``.
    Windows with zero MAD fall back to an absolute tolerance of 1e-9. The first
    and last ``window // 2`` samples lack a centred window and are left as is.

    Returns ``(filtered, mask)`` where ``mask`` flags replaced samples.
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    check_int(window, "window", minimum=3, odd=True)
    out = x.copy()
    mask = np.zeros(len(x), dtype=bool)
    half = window // 2
    if len(x) < window:
        return out, mask
    win = sliding_window_view(x, window)
    med = np.median(win, axis=1)
    mad = np.median(np.abs(win - med[:, None]), axis=1)
    centre = x[half : len(x) - half]
    dev = np.abs(centre - med)
    limit = np.where(mad > 0, threshold * MAD_SCALE * mad, ZERO_MAD_TOL)
    hit = dev > limit
    out[half : len(x) - half][hit] = med[hit]
    mask[half : len(x) - half] = hit
    return out, mask


def savitzky_golay(series, window=101, order=2):
    """Least-squares local polynomial smoother with shrinking edge windows.

    Interior samples use a centred ``window``; near the ends the window shrinks
    symmetrically to the widest odd span that fits, so no data is padded.
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    n = len(x)
    check_int(order, "order", minimum=0)
    check_int(window, "window", minimum=order + 1, odd=True)
    if n < order + 2:
        raise SeriesTooShort(f"need at least {order + 2} samples, got {n}")
    out = x.copy()
    half = window // 2
    if n >= window:
        kernel = savgol_coeffs(window, order, use="dot")
        out[half : n - half] = sliding_window_view(x, window) @ kernel
        edge = range(half)
    else:
        edge = range((n + 1) // 2)
    cache = {}
    for k in edge:
        for idx in {k, n - 1 - k}:
            h = min(idx, n - 1 - idx, half)
            if 2 * h <= order:
                out[idx] = x[idx]
                continue
            if h not in cache:
                cache[h] = savgol_coeffs(2 * h + 1, order, use="dot")
            out[idx] = x[idx - h : idx + h + 1] @ cache[h]
    return out


def smooth_trajectory(traj, cfg=SmootherConfig()):
    """Hampel then Savitzky-Golay, applied to x and y independently."""
    if len(traj) == 0:
        return Trajectory(traj.t, traj.xy, kind="smoothed"), np.zeros((0, 2), dtype=bool)
    cols, masks = [], []
    for col in traj.xy.T:
        filt, m = hampel_filter(col, cfg.hampel_window, cfg.hampel_threshold)
        if len(filt) >= cfg.sg_order + 2:
            filt = savitzky_golay(filt, cfg.sg_window, cfg.sg_order)
        cols.append(filt)
        masks.append(m)
    return Trajectory(traj.t.copy(), np.column_stack(cols), kind="smoothed"), np.column_stack(masks)


def score(est, truth):
    """Per-point errors of ``est`` against ``truth`` interpolated to ``est.t``."""
    if len(est) == 0 or len(truth) == 0:
        raise NoTemporalOverlap("empty trajectory")
    inside = (est.t >= truth.t[0]) & (est.t <= truth.t[-1])
    if not np.any(inside):
        raise NoTemporalOverlap(
            f"estimate spans [{est.t[0]:.3f}, {est.t[-1]:.3f}] s, "
            f"truth spans [{truth.t[0]:.3f}, {truth.t[-1]:.3f}] s"
        )
    t = est.t[inside]
    tx = np.interp(t, truth.t, truth.x)
    ty = np.interp(t, truth.t, truth.y)
    ex = np.abs(est.x[inside] - tx)
    ey = np.abs(est.y[inside] - ty)
    exy = np.hypot(ex, ey)
    return ErrorReport(
        err_x=ex,
        err_y=ey,
        err_xy=exy,
        median_x=float(np.median(ex)),
        median_y=float(np.median(ey)),
        median_xy=float(np.median(exy)),
        p90_x=float(np.percentile(ex, 90)),
        p90_y=float(np.percentile(ey, 90)),
        p90_xy=float(np.percentile(exy, 90)),
        cdf=np.sort(exy),
    )


class HampelFilter(BaseEstimator, TransformerMixin):
    """Column-wise Hampel outlier replacement for ``(n_samples, n_features)`` input."""

    def __init__(self, window=7, threshold=1.0):
        self.window = window
        self.threshold = threshold

    def fit(self, X, y=None):
        check_int(self.window, "window", minimum=3, odd=True)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        X2 = X.reshape(len(X), -1)
        out = np.empty_like(X2)
        self.outlier_mask_ = np.zeros(X2.shape, dtype=bool)
        for j in range(X2.shape[1]):
            out[:, j], self.outlier_mask_[:, j] = hampel_filter(X2[:, j], self.window, self.threshold)
        return out.reshape(X.shape)


class SavitzkyGolaySmoother(BaseEstimator, TransformerMixin):
    def __init__(self, window=101, order=2):
        self.window = window
        self.order = order

    def fit(self, X, y=None):
        check_int(self.order, "order", minimum=0)
        check_int(self.window, "window", minimum=self.order + 1, odd=True)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        X2 = X.reshape(len(X), -1)
        out = np.column_stack([savitzky_golay(X2[:, j], self.window, self.order) for j in range(X2.shape[1])])
        return out.reshape(X.shape)
