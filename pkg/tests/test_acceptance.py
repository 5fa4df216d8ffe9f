"""Acceptance criteria 1-11; each test records one PASS/FAIL line."""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
import pytest

from helpers import NO_IMPAIRMENTS, UNQUANTIZED, record, run_preset, truth_at
from wirssi.exceptions import BlindConfigurationWarning, BoundViolation
from wirssi.geometry import BistaticGeometry, cartesian_to_polar, polar_to_cartesian, solve_target_range
from wirssi.pipeline import PipelineConfig, calibrate_from_trace, process_trace, radial_speed, time_doppler_map, track
from wirssi.presets import preset, run_scenario
from wirssi.ranging import ReflectionRatio
from wirssi.simulator import zeta_bound_check
from wirssi.spectrum import SpectrumConfig, aoa_fft, doppler_fft, doppler_fft_full
from wirssi.tracking import hampel_filter, savitzky_golay, score

DT = 1e-3
TRACK_BOUNDS = {"ellipse": 0.905, "line": 0.784, "rectangle": 0.785}
REFERENCE_MS_PER_CPI = 0.2


def _mirror_gap(spec):
    """max | |Y(f, theta)| - |Y(-f, -theta)| | over bins whose mirror is on the grid."""
    mag = np.abs(spec.values)
    a = mag[..., 1:, :]
    b = mag[..., :0:-1, ::-1]
    return float(np.abs(a - b).max())


def _steered(geo, residue, cfg=SpectrumConfig()):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BlindConfigurationWarning)
        return aoa_fft(doppler_fft(residue, DT, cfg), geo, cfg)


def test_c1_phase_impairment_invariance():
    t0 = time.perf_counter()
    base = run_scenario(preset("ellipse", duration_s=0.5, impairments=NO_IMPAIRMENTS)).rssi_db
    differing = 0
    for seed in range(100):
        sc = preset("ellipse", duration_s=0.5, seed=seed,
                    impairments={"timing_offset_walk": seed % 2 == 1, "pi_jump_rate": 0.01})
        differing += not np.array_equal(run_scenario(sc).rssi_db, base)
    elapsed = time.perf_counter() - t0
    ok = differing == 0 and elapsed < 10.0
    record(1, ok, f"{differing}/100 impairment draws differ from the clean run (need 0), {elapsed:.2f} s (limit 10 s)")
    assert ok


def test_c2_conjugate_symmetry_and_blind_configuration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1000, 3, 128))
    cfg = SpectrumConfig()

    full = doppler_fft_full(x, DT, cfg)
    n = full.shape[-1]
    neg = full[..., (-np.arange(n)) % n]
    norm = np.linalg.norm(full.reshape(1000, -1), axis=1)
    sym_full = float((np.abs(neg - np.conj(full)).reshape(1000, -1).max(axis=1) / norm).max())

    grid = doppler_fft(x, DT, cfg).values
    sym_grid = float((np.abs(grid[..., :0:-1] - np.conj(grid[..., 1:])).reshape(1000, -1).max(axis=1)
                      / np.linalg.norm(grid.reshape(1000, -1), axis=1)).max())

    blind = BistaticGeometry(tx_position=(0.0, 2.3))
    mag = np.abs(_steered(blind, x).values)
    gap = np.abs(mag[:, 1:, :] - mag[:, :0:-1, ::-1]).reshape(1000, -1).max(axis=1)
    blind_gap = float((gap / mag.reshape(1000, -1).max(axis=1)).max())

    # off-axis synthetic target seen from a transmitter with |sin theta_s| >= 0.2
    t = np.arange(128) * DT
    asym = {}
    for sin_s in (0.2, math.sin(math.radians(20)), -0.5):
        theta_s = math.asin(sin_s)
        geo = BistaticGeometry(tx_position=(2.3 * sin_s, 2.3 * math.cos(theta_s)))
        sin_0 = math.sin(math.radians(45))
        i = np.arange(3)[:, None]
        residue = np.cos(2 * math.pi * 25.0 * t[None, :] + geo.spatial_phase_step * i * (sin_0 - sin_s))
        y = _steered(geo, residue)
        asym[sin_s] = _mirror_gap(y) / np.abs(y.values).max()
    elapsed = time.perf_counter() - t0

    tol = 1e-10
    ok = (sym_full < tol and sym_grid < tol and blind_gap < tol
          and min(asym.values()) > 10 * tol and elapsed < 30.0)
    record(2, ok, f"conjugate symmetry {max(sym_full, sym_grid):.2e}*|X| (limit {tol:g}), "
                  f"blind mirror gap {blind_gap:.2e}*max|Y| (limit {tol:g}), "
                  f"min asymmetry at |sin theta_s|>=0.2 {min(asym.values()):.3f}*max|Y| (need > {10 * tol:g}), "
                  f"{elapsed:.2f} s (limit 30 s)")
    assert ok


def test_c3_geometry_round_trip():
    geo = BistaticGeometry()
    xs, ys = np.meshgrid(np.linspace(-4.0, 4.0, 50), np.linspace(0.05, 5.0, 50))
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    round_trip = inversion = 0.0
    tested = 0
    for p in pts:
        det = cartesian_to_polar(p, geo)
        if not det.bistatic_range > geo.d_s:
            continue
        tested += 1
        round_trip = max(round_trip, float(np.hypot(*(polar_to_cartesian(det, geo) - p))))
        inversion = max(inversion, abs(solve_target_range(det, geo) - math.hypot(*p)))
    ok = tested >= 2500 - 5 and round_trip < 1e-9 and inversion < 1e-9
    record(3, ok, f"{tested} grid points, round-trip error {round_trip:.2e} m, "
                  f"range inversion error {inversion:.2e} m (limit 1e-9 m)")
    assert ok


def test_c4_aoa_recovery():
    cap = run_preset("ellipse", channel=UNQUANTIZED)
    geo = preset("ellipse").build_geometry()
    cfg = PipelineConfig(spectrum=SpectrumConfig(aoa_grid="theta"))
    res = process_trace(cap.trace, geo, cfg)
    local = geo.to_local(truth_at(cap.ground_truth, res.timestamps))
    true_aoa = np.arctan2(local[:, 0], local[:, 1])
    moving = np.abs(radial_speed(cap.ground_truth, geo, res.timestamps)) > 0.2
    bin_width = math.pi / cfg.spectrum.aoa_bins
    err = np.abs(res.aoa - true_aoa)
    hit = np.where(np.isnan(err), False, err <= bin_width)[moving]
    frac = float(hit.mean())
    ok = frac >= 0.95
    record(4, ok, f"AoA within one bin ({math.degrees(bin_width):.3f} deg) on {frac:.1%} "
                  f"of {moving.sum()} moving CPIs (need >= 95%)")
    assert ok


@pytest.mark.parametrize("label, overrides, limit", [
    ("noiseless", {"gamma": 0.01, "channel": UNQUANTIZED}, 0.10),
    ("1-dB quantized", {}, 0.25),
])
def test_c5_gamma_calibration(label, overrides, limit):
    cap = run_preset("ellipse", **overrides)
    geo = preset("ellipse").build_geometry()
    cal = calibrate_from_trace(cap.trace, cap.ground_truth, geo)
    rel = (cal.gamma - cap.true_gamma) / cap.true_gamma
    ok = abs(rel) <= limit and cal.sample_count >= 20
    record(5, ok, f"{label}: gamma {cal.gamma:.4g} vs planted {cap.true_gamma:.4g}, "
                  f"error {rel:+.1%} (limit +/-{limit:.0%}) from {cal.sample_count} locations (need >= 20)")
    assert ok


@pytest.mark.parametrize("name", sorted(TRACK_BOUNDS))
def test_c6_end_to_end_tracking(name):
    # one deployment-wide gamma from the other two walks, so the scored trace never calibrates itself
    cap = run_preset(name)
    geo = preset(name).build_geometry()
    t0 = time.perf_counter()
    parts = [calibrate_from_trace(run_preset(o).trace, run_preset(o).ground_truth, geo)
             for o in sorted(TRACK_BOUNDS) if o != name]
    n = sum(p.sample_count for p in parts)
    gamma = ReflectionRatio(sum(p.gamma * p.sample_count for p in parts) / n, n, geometry_hash=geo.hash())
    res = track(cap.trace, geo, gamma)
    rep = score(res.smoothed, cap.ground_truth)
    elapsed = time.perf_counter() - t0
    bound = TRACK_BOUNDS[name]
    ok = rep.median_xy <= bound and elapsed < 120.0
    record(6, ok, f"{name}: smoothed median XY {rep.median_xy:.3f} m (bound {bound} m), "
                  f"p90 {rep.p90_xy:.3f} m, gamma {gamma.gamma:.4g} from the other presets, "
                  f"calibrate + track {elapsed:.1f} s (limit 120 s)")
    assert ok


def test_c7_real_time_budget():
    cap = run_preset("ellipse")
    geo = preset("ellipse").build_geometry()
    res = track(cap.trace, geo, cap.true_gamma)
    t = res.cpis.timings
    mean = t.mean_ms()
    ok = mean < 32.0
    record(7, ok, f"mean {mean:.3f} ms/CPI, p99 {t.p99_ms():.3f} ms over {t.total_cpis} CPIs "
                  f"(limit 32 ms; reference figure {REFERENCE_MS_PER_CPI} ms)")
    assert ok


def test_c8_filter_properties():
    rng = np.random.default_rng(8)
    poly_err = 0.0
    for window in (5, 11, 51, 101):
        for order in (2, 3):
            for degree in range(3):
                k = np.arange(400, dtype=float) / 40.0
                coef = rng.uniform(-2, 2, degree + 1)
                y = np.polyval(coef, k)
                poly_err = max(poly_err, float(np.abs(savitzky_golay(y, window, order) - y).max()))

    removed = planted = clean_changed = extra = 0
    for trial in range(50):
        slope = rng.uniform(-3, 3) or 1.0
        ramp = slope * np.arange(300) + rng.uniform(-5, 5)
        out, mask = hampel_filter(ramp)
        clean_changed += int(mask.sum()) + int(np.count_nonzero(out != ramp))
        spikes = rng.choice(np.arange(10, 290, 10), size=6, replace=False)
        dirty = ramp.copy()
        local_mad = 2.0 * abs(slope)
        dirty[spikes] += rng.choice([-1, 1], size=6) * 10.0 * local_mad * rng.uniform(1.0, 3.0, 6)
        out, mask = hampel_filter(dirty)
        planted += len(spikes)
        removed += int(mask[spikes].sum())
        extra += int(mask.sum()) - int(mask[spikes].sum())
    ok = poly_err < 1e-9 and removed == planted and clean_changed == 0 and extra == 0
    record(8, ok, f"SG polynomial error {poly_err:.2e} (limit 1e-9), Hampel removed {removed}/{planted} spikes, "
                  f"{clean_changed} points altered on clean ramps, {extra} false replacements")
    assert ok


def test_c9_zeta_bound():
    worst = {}
    for name in TRACK_BOUNDS:
        cap = run_preset(name)
        geo = preset(name).build_geometry()
        try:
            worst[name] = zeta_bound_check(cap.ground_truth, geo, d_min=1.0).worst_ratio
        except BoundViolation:
            worst[name] = math.inf
    ok = all(v <= 1.0 for v in worst.values())
    record(9, ok, "max |dzeta| / bound: " + ", ".join(f"{k} {v:.3f}" for k, v in sorted(worst.items()))
           + " (must stay <= 1 with d_min = 1 m)")
    assert ok


def test_c10_feature_centroid_sign():
    cap = run_preset("pushpull")
    geo = preset("pushpull").build_geometry()
    tdm = time_doppler_map(cap.trace, geo)
    v = radial_speed(cap.ground_truth, geo, tdm.cpi_timestamps)
    qualifying = np.abs(v) > 0.2
    centroid = tdm.centroid()
    agree = np.sign(centroid[qualifying]) == np.sign(-v[qualifying])
    frac = float(agree.mean())
    ok = frac >= 0.90 and qualifying.sum() > 0
    record(10, ok, f"centroid sign matches -d(path)/dt on {frac:.1%} of {qualifying.sum()} CPIs (need >= 90%)")
    assert ok


def test_c11_scale_invariance_chain():
    cap = run_preset("ellipse")
    geo = preset("ellipse").build_geometry()
    gamma = calibrate_from_trace(cap.trace, cap.ground_truth, geo)
    ref = track(cap.trace, geo, gamma)

    def compare(other):
        bins = [(d.doppler_index, d.aoa_index) if d else None for d in ref.cpis.detections]
        bins_o = [(d.doppler_index, d.aoa_index) if d else None for d in other.cpis.detections]
        changed = sum(a != b for a, b in zip(bins, bins_o)) + abs(len(bins) - len(bins_o))
        delay_rel = float(np.nanmax(np.abs(other.delays - ref.delays) / ref.delays))
        drift = max(float(np.abs(other.raw.xy - ref.raw.xy).max()),
                    float(np.abs(other.smoothed.xy - ref.smoothed.xy).max()))
        return changed, delay_rel, drift

    linear = compare(track(cap.trace.scaled(10.0), geo, gamma))
    eta = compare(track(run_preset("ellipse", channel={"power_scale": 1e5}).trace, geo, gamma))
    ok = all(c == 0 and d < 1e-9 and x <= 1e-9 for c, d, x in (linear, eta))
    record(11, ok, "x10 linear RSSI: {} bins changed, delay drift {:.1e} rel, point drift {:.1e} m; "
                   "eta x10 in the simulator: {} bins changed, delay drift {:.1e} rel, point drift {:.1e} m "
                   "(need 0 / 1e-9 / 1e-9 m)".format(*linear, *eta))
    assert ok
