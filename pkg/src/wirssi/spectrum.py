"""Joint Doppler-AoA spectrum per CPI, mirror rejection and peak picking.

Axis conventions
----------------
Doppler bins are ``-f_max + k * 2 f_max / L`` for ``k = 0 .. L-1`` so that the
grid contains 0 Hz and is closed under negation except for ``-f_max``. AoA bins
are bin centres over [-90, 90] degrees, uniform either in ``sin(theta)``
(default) or in ``theta``; both grids are symmetric under negation.

With the receive array indexed along +x, the true target peak lands at the
Doppler bin ``-(1/lambda) d(bistatic path)/dt``: approaching targets are
positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_int, check_positive
from .exceptions import BlindConfigurationWarning, ConfigError, DataError
from .geometry import EPS_BLIND

__all__ = [
    "SpectrumConfig",
    "DopplerProfiles",
    "DopplerAoaSpectrum",
    "Detection",
    "doppler_fft",
    "doppler_fft_full",
    "aoa_fft",
    "reject_mirror",
    "find_peak",
    "DopplerAoaTransformer",
]


@dataclass(frozen=True)
class SpectrumConfig:
    doppler_bins: int = 128
    doppler_max: float = 100.0
    aoa_bins: int = 64
    aoa_grid: str = "sin"
    zero_doppler_guard: int = 2
    window: str = "none"
    detection_factor: float = 4.0
    normalize: bool = True

    def __post_init__(self):
        check_int(self.doppler_bins, "doppler_bins", minimum=2, even=True)
        check_positive(self.doppler_max, "doppler_max")
        check_int(self.aoa_bins, "aoa_bins", minimum=1)
        check_int(self.zero_doppler_guard, "zero_doppler_guard", minimum=0)
        check_positive(self.detection_factor, "detection_factor", strict=False)
        if self.aoa_grid not in ("sin", "theta"):
            raise ConfigError(f"aoa_grid must be 'sin' or 'theta', got {self.aoa_grid!r}")
        if self.window not in ("none", "hann"):
            raise ConfigError(f"window must be 'none' or 'hann', got {self.window!r}")

    @property
    def doppler_resolution(self):
        return 2.0 * self.doppler_max / self.doppler_bins

    @property
    def doppler_axis(self):
        return -self.doppler_max + np.arange(self.doppler_bins) * self.doppler_resolution

    @property
    def zero_bin(self):
        return self.doppler_bins // 2

    @property
    def aoa_axis(self):
        k = np.arange(self.aoa_bins) + 0.5
        if self.aoa_grid == "theta":
            return -math.pi / 2 + k * math.pi / self.aoa_bins
        return np.arcsin(-1.0 + k * 2.0 / self.aoa_bins)

    def guard_mask(self):
        """True on Doppler bins outside the zero-Doppler guard band."""
        k = np.arange(self.doppler_bins)
        return np.abs(k - self.zero_bin) > self.zero_doppler_guard


@dataclass
class DopplerProfiles:
    """Per-antenna Doppler spectra ``values[..., N, L_Doppler]`` (unnormalised)."""

    values: np.ndarray
    doppler_axis: np.ndarray
    gain: float
    cpi_timestamp: float = float("nan")


@dataclass
class DopplerAoaSpectrum:
    values: np.ndarray
    doppler_axis: np.ndarray
    aoa_axis: np.ndarray
    cpi_timestamp: float = float("nan")
    kept_mask: np.ndarray | None = None
    blind: bool = False

    def __post_init__(self):
        if self.values.shape[-2:] != (len(self.doppler_axis), len(self.aoa_axis)):
            raise DataError(
                f"spectrum shape {self.values.shape} does not match axes "
                f"({len(self.doppler_axis)}, {len(self.aoa_axis)})"
            )

    @property
    def magnitude(self):
        return np.abs(self.values)


@dataclass(frozen=True)
class Detection:
    doppler: float
    aoa: float
    peak_magnitude: float
    cpi_timestamp: float
    doppler_index: int = -1
    aoa_index: int = -1


def _taper(cpi_length, window):
    if window == "hann":
        return np.hanning(cpi_length)
    return np.ones(cpi_length)


@lru_cache(maxsize=32)
def _dft_plan(cpi_length, dt, doppler_bins, doppler_max):
    """FFT length and bin indices realising the Doppler grid, or a DFT matrix."""
    res = 2.0 * doppler_max / doppler_bins
    axis = -doppler_max + np.arange(doppler_bins) * res
    base = 1.0 / (res * dt)
    nb = round(base)
    if nb >= 1 and abs(base - nb) <= 1e-9 * base:
        n_fft = nb * math.ceil(cpi_length / nb)
        idx = np.mod(np.rint(axis * n_fft * dt).astype(np.int64), n_fft)
        return n_fft, idx, None
    k = np.arange(cpi_length)
    return None, None, np.exp(-2j * np.pi * np.outer(k * dt, axis))


def doppler_fft(residue, sample_interval, cfg=SpectrumConfig()):
    """Doppler transform of each antenna's normalised residue.

    ``residue`` has shape ``(..., N, M)``. The sum over samples is evaluated on
    the configured grid via a zero-padded FFT whose length is a multiple of
    ``1 / (bin width * dt)``, so every grid frequency is an exact FFT bin; a
    direct DFT is used when no integer length exists.
    """
    x = np.asarray(residue, dtype=float)
    m = x.shape[-1]
    taper = _taper(m, cfg.window)
    n_fft, idx, mat = _dft_plan(m, float(sample_interval), cfg.doppler_bins, float(cfg.doppler_max))
    if mat is None:
        vals = np.fft.fft(x * taper, n=n_fft, axis=-1)[..., idx]
    else:
        vals = (x * taper) @ mat
    return DopplerProfiles(vals, cfg.doppler_axis, float(taper.sum()))


def doppler_fft_full(residue, sample_interval, cfg=SpectrumConfig()):
    """Unpruned zero-padded FFT (``n_fft`` bins) used by the Doppler stage."""
    x = np.asarray(residue, dtype=float)
    n_fft, _, mat = _dft_plan(x.shape[-1], float(sample_interval), cfg.doppler_bins, float(cfg.doppler_max))
    if mat is not None:
        n_fft = 1 << (x.shape[-1] - 1).bit_length()
    return np.fft.fft(x * _taper(x.shape[-1], cfg.window), n=n_fft, axis=-1)


def steering_matrix(num_antennas, theta_s, phase_step, aoa_axis):
    """``A[i, a] = exp(j k i (sin theta_s - sin theta_a))`` with ``k`` the element phase step."""
    i = np.arange(num_antennas)[:, None]
    return np.exp(1j * phase_step * i * (math.sin(theta_s) - np.sin(aoa_axis))[None, :])


def aoa_fft(profiles, geo, cfg=SpectrumConfig()):
    """Steered sum over antennas at every Doppler bin.

    Each antenna's profile is rotated by the transmitter steering phase before
    scanning the AoA grid. Magnitudes are divided by ``M * N`` (window gain
    times element count) when ``cfg.normalize`` is set.
    """
    X = np.asarray(profiles.values)
    n = X.shape[-2]
    A = steering_matrix(n, geo.theta_s, geo.spatial_phase_step, cfg.aoa_axis)
    Y = np.swapaxes(X, -1, -2) @ A
    if cfg.normalize:
        Y = Y / (profiles.gain * n)
    blind = abs(math.sin(geo.theta_s)) < EPS_BLIND
    if blind:
        warnings.warn(
            "sin(theta_s) is near zero: Doppler-AoA mirror ambiguity cannot be resolved",
            BlindConfigurationWarning,
            stacklevel=2,
        )
    return DopplerAoaSpectrum(Y, profiles.doppler_axis, cfg.aoa_axis, profiles.cpi_timestamp, blind=blind)


def kept_sector(aoa_axis, theta_s):
    return np.sin(aoa_axis) - math.sin(theta_s) >= 0.0


def reject_mirror(spec, geo):
    """Zero every AoA bin with ``sin(theta) - sin(theta_s) < 0``."""
    keep = kept_sector(spec.aoa_axis, geo.theta_s)
    vals = np.where(keep, spec.values, 0.0)
    return replace(spec, values=vals, kept_mask=keep)


def find_peak(spec, cfg=SpectrumConfig()):
    """Dominant bin outside the zero-Doppler guard, or ``None``.

    Ties resolve to the lowest Doppler index, then the lowest AoA index. The
    peak must reach ``detection_factor`` times the median magnitude of the
    searched bins.
    """
    mag = np.abs(spec.values)
    search = np.ones(mag.shape, dtype=bool)
    if spec.kept_mask is not None:
        search &= spec.kept_mask[None, :]
    if cfg.doppler_bins == mag.shape[0]:
        search &= cfg.guard_mask()[:, None]
    if not search.any():
        return None
    masked = np.where(search, mag, -1.0)
    flat = int(np.argmax(masked))
    di, ai = divmod(flat, mag.shape[1])
    peak = float(mag[di, ai])
    if not peak > 0.0 or peak < cfg.detection_factor * float(np.median(mag[search])):
        return None
    return Detection(
        doppler=float(spec.doppler_axis[di]),
        aoa=float(spec.aoa_axis[ai]),
        peak_magnitude=peak,
        cpi_timestamp=float(spec.cpi_timestamp),
        doppler_index=di,
        aoa_index=ai,
    )


def cpi_spectrum(window, geo, cfg=SpectrumConfig(), mirror=True):
    """Preprocessed CPI window -> (optionally mirror-rejected) spectrum."""
    prof = doppler_fft(window.normalized_dynamic, window.sample_interval, cfg)
    prof.cpi_timestamp = window.timestamp
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BlindConfigurationWarning)
        spec = aoa_fft(prof, geo, cfg)
    return reject_mirror(spec, geo) if mirror else spec


class DopplerAoaTransformer(BaseEstimator, TransformerMixin):
    """Stacked CPI residues ``(n_cpi, N, M)`` -> spectra ``(n_cpi, L_Doppler, L_AoA)``."""

    def __init__(self, geometry=None, sample_interval=1e-3, doppler_bins=128, doppler_max=100.0,
                 aoa_bins=64, aoa_grid="sin", window="none", reject_mirror=True):
        self.geometry = geometry
        self.sample_interval = sample_interval
        self.doppler_bins = doppler_bins
        self.doppler_max = doppler_max
        self.aoa_bins = aoa_bins
        self.aoa_grid = aoa_grid
        self.window = window
        self.reject_mirror = reject_mirror

    def _config(self):
        return SpectrumConfig(self.doppler_bins, self.doppler_max, self.aoa_bins, self.aoa_grid,
                              window=self.window)

    def fit(self, X=None, y=None):
        if self.geometry is None:
            raise ConfigError("DopplerAoaTransformer needs a geometry")
        check_positive(self.sample_interval, "sample_interval")
        self.config_ = self._config()
        self.doppler_axis_ = self.config_.doppler_axis
        self.aoa_axis_ = self.config_.aoa_axis
        if self.geometry.is_blind:
            self.geometry.warn_if_blind()
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 3:
            raise DataError(f"expected (n_cpi, N, M) residues, got shape {X.shape}")
        cfg = getattr(self, "config_", None) or self._config()
        prof = doppler_fft(X, self.sample_interval, cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BlindConfigurationWarning)
            Y = aoa_fft(prof, self.geometry, cfg).values
        if self.reject_mirror:
            Y = np.where(kept_sector(cfg.aoa_axis, self.geometry.theta_s), Y, 0.0)
        return Y
