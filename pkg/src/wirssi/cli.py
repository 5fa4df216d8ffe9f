"""Command-line front end: simulate, track, calibrate, features, eval.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 no temporal
overlap or too few detections.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .exceptions import (
    ConfigError,
    InsufficientDetections,
    NoTemporalOverlap,
    WirssiError,
)
from .features import write_td_binary, write_td_csv
from .geometry import load_geometry, save_geometry
from .io import (
    read_trace_csv,
    read_trajectory_csv,
    write_cdf_csv,
    write_error_report,
    write_json,
    write_trace_csv,
    write_trajectory_csv,
)
from .pipeline import PipelineConfig, calibrate_from_trace, time_doppler_map, track
from .presets import PRESETS, load_scenario, planted_coefficient, preset, run_scenario
from .ranging import ReflectionRatio, load_calibration, save_calibration
from .simulator import write_csi_dump
from .spectrum import SpectrumConfig
from .tracking import SmootherConfig, score

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_OVERLAP = 0, 2, 3, 4

log = logging.getLogger("wirssi")

# ---------------------------------------------------------------------------
# pipeline configuration


def pipeline_config_from_dict(d):
    """Build a ``PipelineConfig`` from its JSON form, rejecting unknown keys."""
    d = dict(d)
    allowed = {"cpi_length", "step", "mode", "ema_weight", "spectrum", "smoother", "reject_mirror", "min_radial_speed"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"pipeline config: unknown field(s) {sorted(unknown)}")
    try:
        spec = SpectrumConfig(**d.pop("spectrum", {}))
        smooth = SmootherConfig(**d.pop("smoother", {}))
        return PipelineConfig(spectrum=spec, smoother=smooth, **d)
    except TypeError as exc:
        raise ConfigError(f"pipeline config: {exc}") from None


def _load_json(path, what):
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{what} {path}: {exc.strerror}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{what} {path}: top level must be a JSON object")
    return d


def resolve_pipeline(args):
    """Config file (if any) with command-line flags layered on top."""
    d = _load_json(args.config, "config") if args.config else {}
    spec = dict(d.get("spectrum", {}))
    smooth = dict(d.get("smoother", {}))
    for flag, key in (("cpi_length", "cpi_length"), ("step", "step"), ("mode", "mode"), ("ema_weight", "ema_weight"),
                      ("min_radial_speed", "min_radial_speed")):
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    for flag, key in (("doppler_bins", "doppler_bins"), ("doppler_max", "doppler_max"), ("aoa_bins", "aoa_bins"),
                      ("aoa_grid", "aoa_grid"), ("window", "window")):
        v = getattr(args, flag, None)
        if v is not None:
            spec[key] = v
    for flag, key in (("hampel_window", "hampel_window"), ("hampel_threshold", "hampel_threshold"),
                      ("sg_window", "sg_window"), ("sg_order", "sg_order")):
        v = getattr(args, flag, None)
        if v is not None:
            smooth[key] = v
    if getattr(args, "no_mirror", False):
        d["reject_mirror"] = False
    d["spectrum"], d["smoother"] = spec, smooth
    return pipeline_config_from_dict(d)


def _add_pipeline_flags(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--config", help="pipeline config JSON; flags below override its fields")
    g.add_argument("--cpi-length", dest="cpi_length", type=int)
    g.add_argument("--step", type=int)
    g.add_argument("--mode", choices=["auto", "mean", "ema"], help="static-clutter estimator")
    g.add_argument("--ema-weight", dest="ema_weight", type=float)
    g.add_argument("--doppler-bins", dest="doppler_bins", type=int)
    g.add_argument("--doppler-max", dest="doppler_max", type=float)
    g.add_argument("--aoa-bins", dest="aoa_bins", type=int)
    g.add_argument("--aoa-grid", dest="aoa_grid", choices=["sin", "theta"])
    g.add_argument("--window", choices=["none", "hann"])
    g.add_argument("--hampel-window", dest="hampel_window", type=int)
    g.add_argument("--hampel-threshold", dest="hampel_threshold", type=float)
    g.add_argument("--sg-window", dest="sg_window", type=int)
    g.add_argument("--sg-order", dest="sg_order", type=int)


def _check_inputs(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"input file not found: {p}")


def _prepare_out_dir(path):
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    if args.scenario:
        sc = load_scenario(args.scenario)
    else:
        sc = preset(args.preset)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.duration is not None:
        over["duration_s"] = args.duration
    if args.gamma is not None:
        over["gamma"] = args.gamma
    if args.quantization_db is not None:
        ch = dict(sc.channel)
        q = args.quantization_db.lower()
        try:
            ch["rssi_quantization_step_db"] = None if q == "none" else float(q)
        except ValueError:
            raise ConfigError(f"--quantization-db must be a number or 'none', got {args.quantization_db!r}") from None
        over["channel"] = ch
    if over:
        sc = type(sc).from_dict({**sc.to_dict(), **over})
    out = _prepare_out_dir(args.out_dir)

    cap = run_scenario(sc, keep_csi=args.csi_dump)
    geo = sc.build_geometry()
    write_trace_csv(cap.trace, out / "trace.csv")
    write_trajectory_csv(cap.ground_truth, out / "truth.csv")
    save_geometry(geo, out / "geometry.json")
    manifest = {
        "scenario": sc.to_dict(),
        "seed": sc.seed,
        "true_gamma": cap.true_gamma,
        "dynamic_coefficient": planted_coefficient(sc),
        "samples": int(len(cap.timestamps)),
        "geometry_hash": geo.hash(),
    }
    write_json(manifest, out / "manifest.json")
    if args.csi_dump:
        write_csi_dump(cap.csi, out / "csi.bin")
    log.info("wrote %d samples x %d antennas to %s", len(cap.timestamps), geo.num_antennas, out)
    return EXIT_OK


def _resolve_gamma(args, geo):
    if args.gamma is not None:
        return ReflectionRatio(args.gamma, geometry_hash=geo.hash())
    cal = load_calibration(args.calibration)
    if cal.geometry_hash is not None and cal.geometry_hash != geo.hash():
        if not args.force:
            raise ConfigError(
                f"calibration {args.calibration} was made for geometry {cal.geometry_hash}, "
                f"current geometry is {geo.hash()}; pass --force to use it anyway"
            )
        log.warning("using calibration from a different geometry (--force)")
    return cal


def cmd_track(args):
    if args.gamma is None and args.calibration is None:
        raise ConfigError("track needs --calibration or --gamma")
    _check_inputs(args.trace, args.geometry, args.calibration)
    cfg = resolve_pipeline(args)
    geo = load_geometry(args.geometry)
    gamma = _resolve_gamma(args, geo)
    trace = read_trace_csv(args.trace)
    out = _prepare_out_dir(args.out_dir)

    res = track(trace, geo, gamma, cfg)
    write_trajectory_csv(res.raw, out / "raw.csv")
    write_trajectory_csv(res.smoothed, out / "smoothed.csv")
    summary = res.summary()
    summary["gamma"] = gamma.gamma
    write_json(summary, out / "track_report.json")
    t = res.cpis.timings
    log.info("%d CPIs, mean %.3f ms/CPI (p99 %.3f ms)", t.total_cpis, t.mean_ms(), t.p99_ms())
    if args.timings:
        print(json.dumps(t.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_calibrate(args):
    _check_inputs(args.trace, args.truth, args.geometry)
    cfg = resolve_pipeline(args)
    geo = load_geometry(args.geometry)
    trace = read_trace_csv(args.trace)
    truth = read_trajectory_csv(args.truth, kind="ground_truth")
    ratio = calibrate_from_trace(trace, truth, geo, cfg)
    save_calibration(ratio, args.out)
    log.info("gamma = %.6g from %d CPIs (dispersion %.3g)", ratio.gamma, ratio.sample_count, ratio.dispersion)
    return EXIT_OK


def cmd_features(args):
    _check_inputs(args.trace, args.geometry)
    cfg = resolve_pipeline(args)
    geo = load_geometry(args.geometry)
    trace = read_trace_csv(args.trace)
    tdm = time_doppler_map(trace, geo, cfg)
    if args.log:
        tdm = replace(tdm, values=tdm.log_scaled())
    write_td_binary(tdm, args.out)
    if args.csv:
        write_td_csv(tdm, args.csv)
    log.info("time-Doppler map %d x %d", *tdm.values.shape)
    return EXIT_OK


def cmd_eval(args):
    _check_inputs(args.est, args.truth)
    est = read_trajectory_csv(args.est)
    truth = read_trajectory_csv(args.truth, kind="ground_truth")
    rep = score(est, truth)
    write_error_report(rep, args.out)
    if args.cdf:
        write_cdf_csv(rep, args.cdf)
    print(f"median XY {rep.median_xy:.3f} m  p90 XY {rep.p90_xy:.3f} m  ({len(rep.err_xy)} points)")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="wirssi", description="RSSI-only bistatic WiFi tracking toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesise an RSSI trace with ground truth")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), default="ellipse")
    src.add_argument("--scenario", help="scenario JSON (see wirssi.presets)")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="seconds")
    p.add_argument("--gamma", type=float, help="planted reflection-coefficient ratio")
    p.add_argument("--quantization-db", dest="quantization_db", help="RSSI step in dB, or 'none'")
    p.add_argument("--csi-dump", dest="csi_dump", action="store_true", help="also write raw CSI (csi.bin)")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="trace -> raw and smoothed trajectories")
    p.add_argument("--trace", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--calibration")
    p.add_argument("--gamma", type=float, help="use this gamma instead of a calibration file")
    p.add_argument("--force", action="store_true", help="accept a calibration made for another geometry")
    p.add_argument("--timings", action="store_true", help="print per-stage timings")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("calibrate", help="estimate gamma from a trace with known positions")
    p.add_argument("--trace", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--min-radial-speed", dest="min_radial_speed", type=float)
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("features", help="time-Doppler feature map")
    p.add_argument("--trace", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--out", required=True, help="binary map (WIRSSI-TD v1)")
    p.add_argument("--csv", help="also write the map as CSV")
    p.add_argument("--log", action="store_true", help="export 10 log10(1 + S)")
    p.add_argument("--no-mirror", dest="no_mirror", action="store_true", help="skip mirror rejection")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("eval", help="score a trajectory against ground truth")
    p.add_argument("--est", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="error report JSON")
    p.add_argument("--cdf", help="CDF CSV")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NoTemporalOverlap, InsufficientDetections) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OVERLAP
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WirssiError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
