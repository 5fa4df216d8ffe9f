"""Synthetic bistatic channel: impaired CSI, quantised RSSI and ground truth.

Static paths follow ``rho = Gamma / tau``. The moving target follows the
two-segment law ``rho = Gamma_X / (tau_tx * tau_rx)``, i.e.
``rho * (tau_tx + tau_rx) = zeta * Gamma_X`` with ``zeta = 1/tau_tx + 1/tau_rx``.
The dynamic phase is generated from the instantaneous bistatic delay, so the
Doppler shift falls out of the delay evolution. The element phase uses the
physical array layout (element ``i`` at ``i * spacing`` along +x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_int, check_positive
from .exceptions import BoundViolation, ConfigError, DataError
from .geometry import SPEED_OF_LIGHT, local_to_bistatic
from .preprocess import RssiTrace
from .tracking import Trajectory

__all__ = [
    "ChannelConfig",
    "ImpairmentConfig",
    "PathSpec",
    "SimulatedCapture",
    "ZetaReport",
    "synthesize_csi",
    "derive_rssi",
    "rssi_linear",
    "zeta_bound_check",
    "simulate",
    "dynamic_coefficient_for_gamma",
    "write_csi_dump",
    "read_csi_dump",
]


@dataclass(frozen=True)
class ChannelConfig:
    """Subcarrier grid, sampling, power scaling, AGC and RSSI reporting.

    ``subcarrier_frequencies=None`` spreads ``num_subcarriers`` tones evenly
    over ``carrier +/- bandwidth/2``. ``noise_floor_db=None`` disables noise and
    ``rssi_quantization_step_db=None`` reports unquantised dB.
    """

    num_subcarriers: int = 30
    subcarrier_frequencies: tuple | None = None
    bandwidth: float = 20e6
    sample_interval: float = 1e-3
    power_scale: float = 1e4
    agc_block: int = 128
    agc_gains: tuple | None = None
    agc_walk_db: float = 0.0
    noise_floor_db: float | None = None
    rssi_quantization_step_db: float | None = 1.0
    rssi_range_db: tuple = (-128.0, 127.0)

    def __post_init__(self):
        check_int(self.num_subcarriers, "num_subcarriers", minimum=1)
        if self.subcarrier_frequencies is not None and len(self.subcarrier_frequencies) != self.num_subcarriers:
            raise ConfigError("subcarrier_frequencies length must equal num_subcarriers")
        check_positive(self.sample_interval, "sample_interval")
        check_positive(self.power_scale, "power_scale")
        check_int(self.agc_block, "agc_block", minimum=1)
        check_positive(self.agc_walk_db, "agc_walk_db", strict=False)
        if self.agc_gains is not None and any(not g > 0 for g in self.agc_gains):
            raise ConfigError("AGC gains must all be > 0")
        if self.rssi_quantization_step_db is not None:
            check_positive(self.rssi_quantization_step_db, "rssi_quantization_step_db")
        lo, hi = self.rssi_range_db
        if not lo < hi:
            raise ConfigError("rssi_range_db must be (low, high) with low < high")

    def frequencies(self, carrier):
        if self.subcarrier_frequencies is not None:
            return np.asarray(self.subcarrier_frequencies, dtype=float)
        if self.num_subcarriers == 1:
            return np.array([float(carrier)])
        return carrier + np.linspace(-self.bandwidth / 2, self.bandwidth / 2, self.num_subcarriers)


@dataclass(frozen=True)
class ImpairmentConfig:
    """Random phase impairments of a bistatic link.

    Timing offset is i.i.d. Gaussian per sample (or a random walk), CFO phase
    is uniform per sample, per-antenna phase offsets are uniform per run and
    may flip by pi at random instants.
    """

    timing_offset_std: float = 50e-9
    timing_offset_walk: bool = False
    cfo: bool = True
    phase_offsets: tuple | None = None
    random_phase_offsets: bool = True
    pi_jump_rate: float = 0.0
    seed: int = 0

    @classmethod
    def none(cls, seed=0):
        return cls(timing_offset_std=0.0, cfo=False, random_phase_offsets=False, seed=seed)

    def draw(self, num_antennas, num_samples):
        """Return ``(tau_to[M], phi_cfo[M], phi_po[N, M])``."""
        rng = np.random.default_rng(np.random.SeedSequence(self.seed).spawn(1)[0])
        to = rng.standard_normal(num_samples) * self.timing_offset_std
        if self.timing_offset_walk:
            to = np.cumsum(to)
        cfo = rng.uniform(0, 2 * math.pi, num_samples) if self.cfo else np.zeros(num_samples)
        if self.phase_offsets is not None:
            if len(self.phase_offsets) != num_antennas:
                raise ConfigError("phase_offsets must have one entry per antenna")
            po = np.asarray(self.phase_offsets, dtype=float)
        elif self.random_phase_offsets:
            po = rng.uniform(0, 2 * math.pi, num_antennas)
        else:
            po = np.zeros(num_antennas)
        po = np.repeat(po[:, None], num_samples, axis=1)
        if self.pi_jump_rate > 0:
            flips = rng.random((num_antennas, num_samples)) < self.pi_jump_rate
            po = po + math.pi * (np.cumsum(flips, axis=1) % 2)
        return to, cfo, po


@dataclass(frozen=True)
class PathSpec:
    """One propagation path.

    Static: ``fixed_delay=None`` / ``aoa=None`` mean the Tx->Rx line of sight.
    Dynamic: ``motion`` is any object with ``positions(t) -> (M, 2)`` world points.
    """

    kind: str
    amplitude_coefficient: float
    motion: object = None
    fixed_delay: float | None = None
    aoa: float | None = None

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise ConfigError(f"path kind must be static or dynamic, got {self.kind!r}")
        check_positive(self.amplitude_coefficient, "amplitude_coefficient")
        if self.kind == "dynamic" and self.motion is None:
            raise ConfigError("dynamic path needs a motion")


@dataclass
class SimulatedCapture:
    timestamps: np.ndarray
    rssi_db: np.ndarray
    ground_truth: Trajectory
    true_gamma: float
    csi: np.ndarray | None = None
    gamma_series: np.ndarray | None = field(default=None, repr=False)

    @property
    def trace(self):
        return RssiTrace(self.timestamps, self.rssi_db, 1.0 / float(np.median(np.diff(self.timestamps))))


def _split_paths(paths):
    static = [p for p in paths if p.kind == "static"]
    dynamic = [p for p in paths if p.kind == "dynamic"]
    if not static:
        raise ConfigError("at least one static path (the Tx-Rx line of sight) is required")
    if len(dynamic) > 1:
        raise ConfigError("at most one dynamic path is supported")
    return static, dynamic


def _element_phase(geo, sin_theta):
    """Phase of element ``i`` relative to element 0 for arrival angle ``theta``."""
    i = np.arange(geo.num_antennas)
    return geo.spatial_phase_step * np.multiply.outer(i, np.asarray(sin_theta))


def static_response(geo, static_paths, freqs):
    """``H^S`` of shape ``(N, L)``."""
    h = np.zeros((geo.num_antennas, len(freqs)), dtype=complex)
    for p in static_paths:
        tau = geo.tau_s if p.fixed_delay is None else p.fixed_delay
        theta = geo.theta_s if p.aoa is None else p.aoa
        rho = p.amplitude_coefficient / tau
        h += rho * np.exp(1j * _element_phase(geo, math.sin(theta)))[:, None] * np.exp(-2j * math.pi * freqs * tau)[None, :]
    return h


def target_kinematics(geo, motion, t):
    """World positions, segment delays and AoA of the target at times ``t``."""
    world = motion.positions(t)
    local = geo.to_local(world)
    dx, aoa, d_tx, d_rx = local_to_bistatic(local, geo)
    return world, d_tx / SPEED_OF_LIGHT, d_rx / SPEED_OF_LIGHT, aoa


def dynamic_response(geo, path, freqs, t):
    """``H^X`` of shape ``(N, L, M)`` plus the per-sample kinematics."""
    world, tau1, tau2, aoa = target_kinematics(geo, path.motion, t)
    tau = tau1 + tau2
    rho = path.amplitude_coefficient / (tau1 * tau2)
    arr = np.exp(1j * _element_phase(geo, np.sin(aoa)))  # (N, M)
    delay = np.exp(-2j * math.pi * np.multiply.outer(freqs, tau))  # (L, M)
    h = rho[None, None, :] * arr[:, None, :] * delay[None, :, :]
    return h, world, tau1, tau2, aoa


def _agc(cfg, num_samples, seed):
    n_blocks = -(-num_samples // cfg.agc_block)
    if cfg.agc_gains is not None:
        gains = np.resize(np.asarray(cfg.agc_gains, dtype=float), n_blocks)
    elif cfg.agc_walk_db > 0:
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
        walk = np.cumsum(rng.standard_normal(n_blocks) * cfg.agc_walk_db)
        gains = 10.0 ** ((walk - walk[0]) / 20.0)
    else:
        return np.ones(num_samples)
    return np.repeat(gains, cfg.agc_block)[:num_samples]


def _num_samples(duration, dt):
    m = int(round(duration / dt))
    if m < 1:
        raise ConfigError(f"duration {duration} s shorter than one sample")
    return m


def synthesize_csi(geo, paths, cfg, imp, duration, seed=0):
    """Impaired CSI tensor of shape ``(N antennas, L subcarriers, M samples)``.

    ``CSI = alpha_k exp(-j(2 pi f_j tau_TO + phi_CFO + phi_PO)) (H^S + H^X + noise)``.
    Noise is drawn from its own seeded stream and is applied before the phase
    impairments, so the impairment draw never changes the noise realisation.
    """
    return simulate(geo, paths, cfg, imp, duration, seed=seed, keep_csi=True).csi


def rssi_linear(csi, cfg):
    """Bandwidth-averaged linear RSSI ``(1/L) sum_j eta |CSI|^2`` -> ``(N, M)``."""
    csi = np.asarray(csi)
    if csi.size == 0:
        raise DataError("empty CSI tensor")
    return cfg.power_scale * np.mean(csi.real**2 + csi.imag**2, axis=1)


def quantize_db(db, step, lo, hi):
    db = np.asarray(db, dtype=float)
    if step is not None:
        db = step * np.floor(db / step + 0.5)
    return np.clip(np.nan_to_num(db, nan=lo, neginf=lo), lo, hi)


def derive_rssi(csi, cfg):
    """Reported RSSI in dB: 10 log10 of the linear RSSI, quantised and clamped."""
    lin = rssi_linear(csi, cfg)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(lin)
    lo, hi = cfg.rssi_range_db
    return quantize_db(db, cfg.rssi_quantization_step_db, lo, hi)


@dataclass
class ZetaReport:
    max_step: float
    bound: float
    worst_ratio: float
    steps: np.ndarray = field(repr=False)
    bounds: np.ndarray = field(repr=False)


def zeta_bound_check(traj, geo, d_min, rel_slack=1e-12):
    """Compare per-step changes of ``zeta = 1/tau_tx + 1/tau_rx`` with the bound.

    The bound at each step is ``(|d tau_tx| + |d tau_rx|) / tau_min**2`` with
    ``tau_min = d_min / c``; ``bound`` in the report is its maximum.
    """
    check_positive(d_min, "d_min")
    pts = traj.xy if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    _, _, d_tx, d_rx = local_to_bistatic(geo.to_local(pts), geo)
    if np.any(d_tx < d_min) or np.any(d_rx < d_min):
        raise DataError(f"trajectory comes closer than d_min = {d_min} m to a terminal")
    tau1, tau2 = d_tx / SPEED_OF_LIGHT, d_rx / SPEED_OF_LIGHT
    zeta = 1.0 / tau1 + 1.0 / tau2
    tau_min = d_min / SPEED_OF_LIGHT
    steps = np.abs(np.diff(zeta))
    bounds = (np.abs(np.diff(tau1)) + np.abs(np.diff(tau2))) / tau_min**2
    if len(steps) == 0:
        return ZetaReport(0.0, 0.0, 0.0, steps, bounds)
    over = steps > bounds * (1.0 + rel_slack)
    if np.any(over):
        k = int(np.argmax(over))
        raise BoundViolation(f"step {k}: |dzeta| = {steps[k]:.6g} > bound {bounds[k]:.6g}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bounds > 0, steps / bounds, 0.0)
    return ZetaReport(float(steps.max()), float(bounds.max()), float(ratio.max()), steps, bounds)


def dynamic_coefficient_for_gamma(gamma, geo, static_coefficient, point):
    """``Gamma_X`` such that ``zeta(point) * Gamma_X / Gamma_S == gamma``."""
    _, _, d_tx, d_rx = local_to_bistatic(geo.to_local(np.asarray(point, dtype=float)), geo)
    zeta = SPEED_OF_LIGHT / float(d_tx) + SPEED_OF_LIGHT / float(d_rx)
    return gamma * static_coefficient / zeta


def simulate(geo, paths, cfg, imp, duration, seed=0, keep_csi=False, chunk=8192):
    """Run the channel model and report RSSI plus ground truth.

    Time is processed in chunks of ``chunk`` samples so long captures stay
    within memory; results do not depend on the chunk size.
    """
    static, dynamic = _split_paths(paths)
    m = _num_samples(duration, cfg.sample_interval)
    t = np.arange(m) * cfg.sample_interval
    freqs = cfg.frequencies(geo.carrier_frequency)
    hs = static_response(geo, static, freqs)
    to, cfo, po = imp.draw(geo.num_antennas, m)
    alpha = _agc(cfg, m, seed)

    sigma = None
    if cfg.noise_floor_db is not None:
        sigma = math.sqrt(10.0 ** (cfg.noise_floor_db / 10.0) / 2.0)
        noise_rngs = [np.random.default_rng(ss) for ss in np.random.SeedSequence(seed).spawn(2)[1].spawn(geo.num_antennas)]

    n, l = geo.num_antennas, len(freqs)
    lin = np.empty((n, m))
    csi_all = np.empty((n, l, m), dtype=complex) if keep_csi else None
    world = np.empty((m, 2))
    gamma_series = None
    if dynamic:
        gamma_series = np.empty(m)
    else:
        world[:] = np.nan

    for s in range(0, m, chunk):
        e = min(m, s + chunk)
        h = np.repeat(hs[:, :, None], e - s, axis=2)
        if dynamic:
            hx, w, tau1, tau2, _ = dynamic_response(geo, dynamic[0], freqs, t[s:e])
            h += hx
            world[s:e] = w
            gamma_series[s:e] = (1.0 / tau1 + 1.0 / tau2) * dynamic[0].amplitude_coefficient / static[0].amplitude_coefficient
        if sigma is not None:
            for i, rng in enumerate(noise_rngs):
                z = rng.standard_normal((e - s, l, 2))
                h[i] += sigma * (z[..., 0] + 1j * z[..., 1]).T
        phase = 2 * math.pi * np.multiply.outer(freqs, to[s:e])[None] + cfo[None, None, s:e] + po[:, None, s:e]
        csi = alpha[None, None, s:e] * np.exp(-1j * phase) * h
        lin[:, s:e] = rssi_linear(csi, cfg)
        if keep_csi:
            csi_all[:, :, s:e] = csi

    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(lin)
    lo, hi = cfg.rssi_range_db
    rssi = quantize_db(db, cfg.rssi_quantization_step_db, lo, hi)
    truth = Trajectory(t, world if dynamic else np.zeros((m, 2)), kind="ground_truth")
    true_gamma = float(gamma_series.mean()) if dynamic else float("nan")
    return SimulatedCapture(t, rssi, truth, true_gamma, csi_all, gamma_series)


CSI_MAGIC = "WIRSSI-CSI v1"


def write_csi_dump(csi, path):
    """Header line ``WIRSSI-CSI v1 N L M`` then little-endian float32 (re, im) pairs."""
    csi = np.asarray(csi)
    n, l, m = csi.shape
    inter = np.empty(csi.shape + (2,), dtype="<f4")
    inter[..., 0] = csi.real
    inter[..., 1] = csi.imag
    with open(path, "wb") as fh:
        fh.write(f"{CSI_MAGIC} {n} {l} {m}\n".encode("ascii"))
        fh.write(inter.tobytes(order="C"))


def read_csi_dump(path):
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    head = raw[:nl].decode("ascii").split()
    if " ".join(head[:2]) != CSI_MAGIC or len(head) != 5:
        raise DataError(f"{path}: not a {CSI_MAGIC} file")
    n, l, m = map(int, head[2:])
    data = np.frombuffer(raw[nl + 1 :], dtype="<f4")
    if data.size != n * l * m * 2:
        raise DataError(f"{path}: expected {n * l * m * 2} floats, found {data.size}")
    data = data.reshape(n, l, m, 2)
    return data[..., 0].astype(np.float64) + 1j * data[..., 1]
