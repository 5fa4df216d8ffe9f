import json

import numpy as np
import pytest

from wirssi.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_OVERLAP, build_parser, main
from wirssi.exceptions import DataError
from wirssi.features import read_td_binary, read_td_csv
from wirssi.geometry import BistaticGeometry, save_geometry
from wirssi.io import read_trace_csv, read_trajectory_csv, write_trace_csv, write_trajectory_csv
from wirssi.preprocess import RssiTrace
from wirssi.tracking import Trajectory

SUBCOMMANDS = ["simulate", "track", "calibrate", "features", "eval"]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--preset", "ellipse", "--duration", "12", "--out-dir", str(out)]) == EXIT_OK
    return out


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_trace_csv_round_trip(tmp_path):
    db = np.array([[-40.0, -41.5, np.nan], [-50.0, -49.0, -48.25]])
    tr = RssiTrace([0.0, 0.001, 0.002], db, 1000.0)
    write_trace_csv(tr, tmp_path / "t.csv")
    back = read_trace_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.samples_db, db)
    np.testing.assert_allclose(back.timestamps, tr.timestamps, atol=1e-12)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t_s,rssi_db_a1,rssi_db_a2"


def test_trajectory_csv_round_trip(tmp_path):
    traj = Trajectory([0.0, 0.5], [[1.25, 2.5], [-0.125, 3.0]])
    write_trajectory_csv(traj, tmp_path / "j.csv")
    back = read_trajectory_csv(tmp_path / "j.csv")
    np.testing.assert_array_equal(back.xy, traj.xy)


@pytest.mark.parametrize("text, needle", [
    ("t_s,rssi_db_a1\n0.0,-40\n0.001,abc\n", "line 3"),
    ("t_s,rssi_db_a1\n0.0,-40,-3\n", "line 2"),
    ("time,rssi\n0.0,-40\n", "header"),
    ("t_s,foo\n0.0,-40\n", "columns"),
    ("t_s,rssi_db_a1\n,-40\n", "timestamp"),
])
def test_trace_csv_errors_name_the_line(tmp_path, text, needle):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataError, match=needle):
        read_trace_csv(path)


def test_simulate_outputs(sim_dir):
    assert sorted(p.name for p in sim_dir.iterdir()) == ["geometry.json", "manifest.json", "trace.csv", "truth.csv"]
    trace = read_trace_csv(sim_dir / "trace.csv")
    assert trace.samples_db.shape == (3, 12_000)
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["samples"] == 12_000 and manifest["seed"] == 1
    assert manifest["scenario"]["gamma"] == 0.4
    assert manifest["geometry_hash"] == BistaticGeometry().hash()


def test_simulate_is_byte_identical(tmp_path, sim_dir):
    assert main(["simulate", "--preset", "ellipse", "--duration", "12", "--out-dir", str(tmp_path)]) == EXIT_OK
    assert _files(tmp_path) == _files(sim_dir)


def test_simulate_seed_only_moves_impairments(tmp_path, sim_dir):
    # the seed draws CSI impairments, which RSSI never sees
    main(["simulate", "--preset", "ellipse", "--duration", "12", "--seed", "7", "--out-dir", str(tmp_path)])
    assert (tmp_path / "trace.csv").read_bytes() == (sim_dir / "trace.csv").read_bytes()
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 7


def test_simulate_rectangle_bounding_box(tmp_path):
    assert main(["simulate", "--preset", "rectangle", "--duration", "9", "--quantization-db", "none",
                 "--out-dir", str(tmp_path)]) == EXIT_OK
    truth = read_trajectory_csv(tmp_path / "truth.csv")
    np.testing.assert_allclose([truth.x.min(), truth.x.max(), truth.y.min(), truth.y.max()],
                               [2.2, 3.2, 0.4, 3.4], atol=1e-9)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["scenario"]["channel"]["rssi_quantization_step_db"] is None


def test_simulate_csi_dump(tmp_path):
    assert main(["simulate", "--preset", "line", "--duration", "0.2", "--csi-dump", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "csi.bin").stat().st_size > 0


def test_track_calibrate_features_eval(tmp_path, sim_dir, capsys):
    cal = tmp_path / "cal.json"
    args = ["--trace", str(sim_dir / "trace.csv"), "--geometry", str(sim_dir / "geometry.json")]
    assert main(["calibrate", *args, "--truth", str(sim_dir / "truth.csv"), "--out", str(cal)]) == EXIT_OK
    d = json.loads(cal.read_text())
    assert set(d) >= {"gamma", "dispersion", "sample_count", "geometry_hash"} and d["gamma"] > 0

    out = tmp_path / "trk"
    assert main(["track", *args, "--calibration", str(cal), "--timings", "--out-dir", str(out)]) == EXIT_OK
    timings = json.loads(capsys.readouterr().out)
    assert timings["total_cpis"] > 0 and timings["per_cpi"]["mean_ms"] >= 0
    report = json.loads((out / "track_report.json").read_text())
    assert report["gamma"] == d["gamma"]
    smoothed = read_trajectory_csv(out / "smoothed.csv")
    raw = read_trajectory_csv(out / "raw.csv")
    np.testing.assert_array_equal(smoothed.t, raw.t)

    assert main(["eval", "--est", str(out / "smoothed.csv"), "--truth", str(sim_dir / "truth.csv"),
                 "--out", str(tmp_path / "err.json"), "--cdf", str(tmp_path / "cdf.csv")]) == EXIT_OK
    err = json.loads((tmp_path / "err.json").read_text())
    assert err["p90_xy_m"] >= err["median_xy_m"] >= 0
    assert "median XY" in capsys.readouterr().out
    cdf = np.loadtxt(tmp_path / "cdf.csv", delimiter=",", skiprows=1)
    assert cdf[-1, 1] == 1.0 and np.all(np.diff(cdf[:, 0]) >= 0)

    fb, fc = tmp_path / "map.bin", tmp_path / "map.csv"
    assert main(["features", *args, "--out", str(fb), "--csv", str(fc)]) == EXIT_OK
    np.testing.assert_array_equal(read_td_binary(fb), read_td_csv(fc)[0])
    assert read_td_binary(fb).shape == (report["cpis"], 128)


def test_calibration_geometry_mismatch_needs_force(tmp_path, sim_dir):
    cal = tmp_path / "cal.json"
    args = ["--trace", str(sim_dir / "trace.csv"), "--geometry", str(sim_dir / "geometry.json")]
    main(["calibrate", *args, "--truth", str(sim_dir / "truth.csv"), "--out", str(cal)])
    moved = tmp_path / "moved.json"
    save_geometry(BistaticGeometry(tx_position=(0.9, 2.1)), moved)
    base = ["track", "--trace", str(sim_dir / "trace.csv"), "--geometry", str(moved), "--calibration", str(cal)]
    assert main([*base, "--out-dir", str(tmp_path / "a")]) == EXIT_CONFIG
    assert not (tmp_path / "a").exists()
    assert main([*base, "--force", "--out-dir", str(tmp_path / "b")]) == EXIT_OK


def test_no_temporal_overlap_exit_code(tmp_path, sim_dir):
    truth = read_trajectory_csv(sim_dir / "truth.csv")
    late = tmp_path / "late.csv"
    write_trajectory_csv(Trajectory(truth.t + 1000.0, truth.xy), late)
    assert main(["eval", "--est", str(sim_dir / "truth.csv"), "--truth", str(late),
                 "--out", str(tmp_path / "e.json")]) == EXIT_OVERLAP
    assert main(["calibrate", "--trace", str(sim_dir / "trace.csv"), "--geometry", str(sim_dir / "geometry.json"),
                 "--truth", str(late), "--out", str(tmp_path / "c.json")]) == EXIT_OVERLAP
    assert not (tmp_path / "c.json").exists()


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_for_every_subcommand(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([cmd, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_config_errors_leave_no_outputs(tmp_path, sim_dir):
    out = tmp_path / "o"
    assert main(["simulate", "--quantization-db", "abc", "--out-dir", str(out)]) == EXIT_CONFIG
    assert main(["simulate", "--duration", "-1", "--out-dir", str(out)]) == EXIT_CONFIG
    trk = ["track", "--trace", str(sim_dir / "trace.csv"), "--gamma", "0.3", "--out-dir", str(out)]
    assert main([*trk, "--geometry", str(tmp_path / "absent.json")]) == EXIT_CONFIG
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"cpi_length": 128, "bogus": 1}')
    assert main([*trk, "--geometry", str(sim_dir / "geometry.json"), "--config", str(cfg)]) == EXIT_CONFIG
    cfg.write_text('{"spectrum": {"doppler_bins": 127}}')
    assert main([*trk, "--geometry", str(sim_dir / "geometry.json"), "--config", str(cfg)]) == EXIT_CONFIG
    cfg.write_text('{"cpi_length": 128,')
    assert main([*trk, "--geometry", str(sim_dir / "geometry.json"), "--config", str(cfg)]) == EXIT_CONFIG
    assert main(["track", "--trace", str(sim_dir / "trace.csv"), "--geometry", str(sim_dir / "geometry.json"),
                 "--out-dir", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_config_file_with_flag_override(tmp_path, sim_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"step": 64, "smoother": {"sg_window": 51}}')
    out = tmp_path / "o"
    assert main(["track", "--trace", str(sim_dir / "trace.csv"), "--geometry", str(sim_dir / "geometry.json"),
                 "--gamma", "0.3", "--config", str(cfg), "--step", "128", "--out-dir", str(out)]) == EXIT_OK
    report = json.loads((out / "track_report.json").read_text())
    assert report["cpis"] == len(range(0, 12_000 - 128 + 1, 128))


def test_malformed_trace_is_data_error(tmp_path, sim_dir):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_s,rssi_db_a1,rssi_db_a2,rssi_db_a3\n0.0,1,2,x\n")
    assert main(["track", "--trace", str(bad), "--geometry", str(sim_dir / "geometry.json"), "--gamma", "0.3",
                 "--out-dir", str(tmp_path / "o")]) == EXIT_DATA


def test_track_with_half_of_one_antenna_missing(tmp_path, sim_dir):
    lines = (sim_dir / "trace.csv").read_text().splitlines()
    rows = [lines[0]]
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if i % 2 == 0:
            cells[2] = ""
        rows.append(",".join(cells))
    holed = tmp_path / "holed.csv"
    holed.write_text("\n".join(rows) + "\n")
    out = tmp_path / "o"
    assert main(["track", "--trace", str(holed), "--geometry", str(sim_dir / "geometry.json"), "--gamma", "0.3",
                 "--out-dir", str(out)]) == EXIT_OK
    gaps = json.loads((out / "track_report.json").read_text())["gap_stats"]
    assert gaps["missing_samples"] == 6000 and gaps["held_samples"] + gaps["invalid_samples"] == 6000


def test_features_on_empty_trace(tmp_path, sim_dir):
    empty = tmp_path / "empty.csv"
    empty.write_text((sim_dir / "trace.csv").read_text().splitlines()[0] + "\n")
    out = tmp_path / "e.bin"
    assert main(["features", "--trace", str(empty), "--geometry", str(sim_dir / "geometry.json"),
                 "--out", str(out)]) == EXIT_OK
    assert out.read_bytes() == b"WIRSSI-TD v1 0 128\n"
