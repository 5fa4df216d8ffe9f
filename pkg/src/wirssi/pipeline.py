"""End-to-end RSSI tracking driver: CPIs -> detections -> delays -> trajectory."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_positive
from .exceptions import ConfigError, DataError, InsufficientDetections, NoTemporalOverlap
from .features import TimeDopplerMap, doppler_profile, energy_map
from .geometry import BistaticGeometry, local_to_bistatic
from .preprocess import DEFAULT_CPI_LENGTH, DEFAULT_EMA_WEIGHT, DEFAULT_STEP, GapStats, RssiTrace, iter_cpis, resolve_mode
from .ranging import CalibrationSample, ReflectionRatio, calibrate_gamma, delays_from_amplitudes
from .spectrum import SpectrumConfig, cpi_spectrum, find_peak
from .tracking import SmootherConfig, Trajectory, localize, score as score_trajectory, smooth_trajectory

MIN_CALIBRATION_CPIS = 5
STAGES = ("preprocess", "spectrum", "ranging")

__all__ = [
    "PipelineConfig",
    "StageTimings",
    "CpiResults",
    "TrackResult",
    "process_trace",
    "track",
    "calibrate_from_trace",
    "time_doppler_map",
    "RssiTracker",
]


@dataclass(frozen=True)
class PipelineConfig:
    cpi_length: int = DEFAULT_CPI_LENGTH
    step: int = DEFAULT_STEP
    mode: str = "auto"
    ema_weight: float = DEFAULT_EMA_WEIGHT
    spectrum: SpectrumConfig = SpectrumConfig()
    smoother: SmootherConfig = SmootherConfig()
    reject_mirror: bool = True
    # calibration only uses CPIs where the true bistatic path changes at least this fast
    min_radial_speed: float = 0.2

    def __post_init__(self):
        if not (isinstance(self.cpi_length, (int, np.integer)) and self.cpi_length >= 2):
            raise ConfigError(f"cpi_length must be an integer >= 2, got {self.cpi_length!r}")
        if not (isinstance(self.step, (int, np.integer)) and self.step >= 1):
            raise ConfigError(f"step must be an integer >= 1, got {self.step!r}")
        resolve_mode(self.mode, 1000.0)
        if not 0.0 < self.ema_weight <= 1.0:
            raise ConfigError(f"ema_weight must lie in (0, 1], got {self.ema_weight!r}")
        check_positive(self.min_radial_speed, "min_radial_speed", strict=False)


@dataclass
class StageTimings:
    """Per-CPI wall time of each stage in milliseconds (monotonic clock)."""

    samples: dict = field(default_factory=lambda: {s: [] for s in STAGES})

    def add(self, stage, seconds):
        self.samples[stage].append(seconds * 1e3)

    @property
    def total_cpis(self):
        return len(self.samples[STAGES[0]])

    def per_cpi(self):
        """Total of all stages for each CPI."""
        n = self.total_cpis
        if n == 0:
            return np.empty(0)
        return sum(np.asarray(self.samples[s][:n]) for s in STAGES if len(self.samples[s]) == n)

    def mean_ms(self, stage=None):
        v = self.per_cpi() if stage is None else np.asarray(self.samples[stage])
        return float(v.mean()) if len(v) else 0.0

    def p99_ms(self, stage=None):
        v = self.per_cpi() if stage is None else np.asarray(self.samples[stage])
        return float(np.percentile(v, 99)) if len(v) else 0.0

    def to_dict(self):
        out = {"total_cpis": self.total_cpis}
        for s in STAGES:
            out[s] = {"mean_ms": self.mean_ms(s), "p99_ms": self.p99_ms(s)}
        out["per_cpi"] = {"mean_ms": self.mean_ms(), "p99_ms": self.p99_ms()}
        return out


@dataclass
class CpiResults:
    timestamps: np.ndarray
    start_indices: np.ndarray
    detections: list
    gap_stats: GapStats
    timings: StageTimings
    profiles: np.ndarray | None = None

    @property
    def detected(self):
        return np.array([d is not None for d in self.detections], dtype=bool)

    def _field(self, name):
        return np.array([np.nan if d is None else getattr(d, name) for d in self.detections], dtype=float)

    @property
    def magnitudes(self):
        return self._field("peak_magnitude")

    @property
    def aoa(self):
        return self._field("aoa")

    @property
    def doppler(self):
        return self._field("doppler")


@dataclass
class TrackResult:
    raw: Trajectory
    smoothed: Trajectory
    cpis: CpiResults
    delays: np.ndarray
    undetected: int
    dropped: int
    outlier_mask: np.ndarray

    def summary(self):
        return {
            "cpis": int(len(self.cpis.timestamps)),
            "undetected_cpis": self.undetected,
            "dropped_points": self.dropped,
            "raw_points": len(self.raw),
            "hampel_replacements_x": int(self.outlier_mask[:, 0].sum()) if len(self.outlier_mask) else 0,
            "hampel_replacements_y": int(self.outlier_mask[:, 1].sum()) if len(self.outlier_mask) else 0,
            "gap_stats": self.cpis.gap_stats.to_dict(),
            "timings": self.cpis.timings.to_dict(),
        }


def process_trace(trace, geo, cfg=PipelineConfig(), gamma=None, keep_profiles=False):
    """Run preprocessing, the Doppler-AoA spectrum and peak picking per CPI.

    When ``gamma`` is given, the amplitude-to-delay inversion is timed as the
    ranging stage of each CPI (its result is recomputed vectorised by ``track``).
    """
    if not isinstance(trace, RssiTrace):
        raise DataError("process_trace expects an RssiTrace")
    if trace.num_antennas != geo.num_antennas:
        raise DataError(f"trace has {trace.num_antennas} antennas, geometry has {geo.num_antennas}")
    stats = GapStats()
    timings = StageTimings()
    ts, starts, dets, profs = [], [], [], []
    windows = iter_cpis(trace, cfg.cpi_length, cfg.step, cfg.mode, cfg.ema_weight, stats)
    while True:
        t0 = time.perf_counter()
        w = next(windows, None)
        t1 = time.perf_counter()
        if w is None:
            break
        spec = cpi_spectrum(w, geo, cfg.spectrum, mirror=cfg.reject_mirror)
        det = find_peak(spec, cfg.spectrum)
        t2 = time.perf_counter()
        if gamma is not None and det is not None:
            delays_from_amplitudes(det.peak_magnitude, gamma, geo)
        t3 = time.perf_counter()
        timings.add("preprocess", t1 - t0)
        timings.add("spectrum", t2 - t1)
        timings.add("ranging", t3 - t2)
        ts.append(w.timestamp)
        starts.append(w.start_index)
        dets.append(det)
        if keep_profiles:
            profs.append(doppler_profile(energy_map(spec)))
    profiles = None
    if keep_profiles:
        nd = cfg.spectrum.doppler_bins
        profiles = np.vstack(profs) if profs else np.empty((0, nd))
    return CpiResults(np.asarray(ts, dtype=float), np.asarray(starts, dtype=np.int64), dets, stats, timings, profiles)


def track(trace, geo, gamma, cfg=PipelineConfig()):
    """Full tracking chain; returns a ``TrackResult`` with raw and smoothed trajectories."""
    res = process_trace(trace, geo, cfg, gamma=gamma)
    hit = res.detected
    delays = delays_from_amplitudes(res.magnitudes[hit], gamma, geo)
    raw, dropped = localize(res.aoa[hit], delays, res.timestamps[hit], geo)
    smoothed, mask = smooth_trajectory(raw, cfg.smoother)
    return TrackResult(raw, smoothed, res, delays, int((~hit).sum()), dropped, mask)


def radial_speed(truth, geo, at=None):
    """Rate of change of the true bistatic path length (m/s), optionally interpolated to ``at``."""
    _, _, d_tx, d_rx = local_to_bistatic(geo.to_local(truth.xy), geo)
    path = d_tx + d_rx
    if len(truth) < 2:
        v = np.zeros_like(path)
    else:
        v = np.gradient(path, truth.t)
    return v if at is None else np.interp(at, truth.t, v)


def calibrate_from_trace(trace, truth, geo, cfg=PipelineConfig(), min_cpis=MIN_CALIBRATION_CPIS):
    """Calibrate gamma from a trace with a known world-frame truth trajectory.

    Each detected CPI inside the truth span is paired with the truth position at
    the CPI timestamp. CPIs whose true radial speed is below
    ``cfg.min_radial_speed`` carry little Doppler energy outside the clutter
    guard and are skipped.
    """
    res = process_trace(trace, geo, cfg)
    if len(res.timestamps) == 0:
        raise InsufficientDetections("trace is shorter than one CPI")
    inside = (res.timestamps >= truth.t[0]) & (res.timestamps <= truth.t[-1])
    if not inside.any():
        raise NoTemporalOverlap(
            f"CPIs span [{res.timestamps[0]:.3f}, {res.timestamps[-1]:.3f}] s, "
            f"truth spans [{truth.t[0]:.3f}, {truth.t[-1]:.3f}] s"
        )
    speed = np.abs(radial_speed(truth, geo, res.timestamps))
    use = inside & res.detected & (speed >= cfg.min_radial_speed)
    if use.sum() < min_cpis:
        raise InsufficientDetections(f"{int(use.sum())} usable CPIs, need at least {min_cpis}")
    t = res.timestamps[use]
    pos = np.column_stack([np.interp(t, truth.t, truth.x), np.interp(t, truth.t, truth.y)])
    local = geo.to_local(pos)
    samples = [
        CalibrationSample(float(m), tuple(p), float(tt))
        for m, p, tt in zip(res.magnitudes[use], local, t)
    ]
    return calibrate_gamma(samples, geo)


def time_doppler_map(trace, geo, cfg=PipelineConfig()):
    res = process_trace(trace, geo, cfg, keep_profiles=True)
    return TimeDopplerMap(res.profiles, cfg.spectrum.doppler_axis, res.timestamps)


class RssiTracker(BaseEstimator):
    """Passive tracker from per-antenna RSSI.

    ``fit(trace, truth)`` calibrates gamma from a trace with known target
    positions (skipped when ``gamma`` is given); ``predict(trace)`` returns the
    smoothed world-frame trajectory and keeps the full result in ``result_``.
    """

    def __init__(self, geometry=None, gamma=None, cpi_length=DEFAULT_CPI_LENGTH, step=DEFAULT_STEP,
                 mode="auto", ema_weight=DEFAULT_EMA_WEIGHT, doppler_bins=128, doppler_max=100.0,
                 aoa_bins=64, aoa_grid="sin", hampel_window=7, hampel_threshold=1.0,
                 sg_window=101, sg_order=2, min_radial_speed=0.2):
        self.geometry = geometry
        self.gamma = gamma
        self.cpi_length = cpi_length
        self.step = step
        self.mode = mode
        self.ema_weight = ema_weight
        self.doppler_bins = doppler_bins
        self.doppler_max = doppler_max
        self.aoa_bins = aoa_bins
        self.aoa_grid = aoa_grid
        self.hampel_window = hampel_window
        self.hampel_threshold = hampel_threshold
        self.sg_window = sg_window
        self.sg_order = sg_order
        self.min_radial_speed = min_radial_speed

    def _config(self):
        return PipelineConfig(
            cpi_length=self.cpi_length,
            step=self.step,
            mode=self.mode,
            ema_weight=self.ema_weight,
            spectrum=SpectrumConfig(self.doppler_bins, self.doppler_max, self.aoa_bins, self.aoa_grid),
            smoother=SmootherConfig(self.hampel_window, self.hampel_threshold, self.sg_window, self.sg_order),
            min_radial_speed=self.min_radial_speed,
        )

    def _geometry(self):
        return BistaticGeometry() if self.geometry is None else self.geometry

    def fit(self, X, y=None):
        self.config_ = self._config()
        geo = self._geometry()
        if self.gamma is not None:
            self.gamma_ = self.gamma if isinstance(self.gamma, ReflectionRatio) else ReflectionRatio(float(self.gamma))
        elif y is None:
            raise ConfigError("fit needs a truth trajectory when gamma is not given")
        else:
            self.gamma_ = calibrate_from_trace(X, y, geo, self.config_)
        return self

    def predict(self, X):
        if not hasattr(self, "gamma_"):
            raise ConfigError("RssiTracker is not fitted")
        self.result_ = track(X, self._geometry(), self.gamma_, self.config_)
        return self.result_.smoothed

    def score(self, X, y):
        """Negative smoothed median XY error, so larger is better."""
        return -score_trajectory(self.predict(X), y).median_xy
