"""RSSI-only bistatic WiFi sensing: simulator, Doppler-AoA tracking and features."""

from .exceptions import (
    AxisMismatch,
    BelowMagnitudeFloor,
    BlindConfigurationWarning,
    BoundViolation,
    CoincidentPoint,
    ConfigError,
    DataError,
    DegenerateGeometry,
    EmptyCalibration,
    GeometryError,
    InsufficientDetections,
    InvalidRange,
    NoTemporalOverlap,
    RangeNotBistatic,
    SeriesTooShort,
    WirssiError,
    ZeroStaticPower,
)
from .features import TimeDopplerMap, TimeDopplerTransformer, doppler_profile, energy_map, stack_time_doppler
from .geometry import BistaticGeometry, PolarDetection, cartesian_to_polar, polar_to_cartesian, solve_target_range
from .pipeline import PipelineConfig, RssiTracker, StageTimings, calibrate_from_trace, process_trace, track
from .preprocess import ClutterRemover, CpiWindow, RssiTrace, extract_cpi, extract_cpi_ema
from .presets import Scenario, preset, run_scenario
from .ranging import CalibrationSample, ReflectionRatio, calibrate_gamma, delay_from_amplitude
from .simulator import ChannelConfig, ImpairmentConfig, PathSpec, derive_rssi, simulate, synthesize_csi
from .spectrum import Detection, DopplerAoaSpectrum, DopplerAoaTransformer, SpectrumConfig, find_peak
from .tracking import ErrorReport, HampelFilter, SavitzkyGolaySmoother, SmootherConfig, Trajectory, score

__version__ = "0.1.0"
