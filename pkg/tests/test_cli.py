import json
import sys

import pytest

from postureclip.cli import main
from postureclip.imu import CalibrationProfile


@pytest.fixture(autouse=True)
def _in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def events(out):
    rows = [ln.split("\t") for ln in out.splitlines() if "\t" in ln][1:]
    return [(float(t), k) for t, k in rows]


def test_simulate_twice_identical(tmp_path, capsys):
    (tmp_path / "s.json").write_text(json.dumps(
        {"seed": 1, "segments": [{"kind": "SLOUCH", "duration_s": 5, "tilt_deg": 30, "noise_milli_g": 5}]}))
    for name in ("a.bin", "b.bin"):
        assert run(capsys, "simulate", "--scenario", "s.json", "--seed", "42", "--out", name)[0] == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert len((tmp_path / "a.bin").read_bytes()) == 50 * 16


def test_calibrate_upright_and_threshold(tmp_path, capsys):
    run(capsys, "simulate", "--scenario", "calibration_still", "--out", "still.bin")
    code, out, _ = run(capsys, "calibrate", "--input", "still.bin", "--threshold-deg", "20", "--out", "p.json",
                       "--created-at", "2026-01-01T00:00:00Z")
    assert code == 0 and "threshold_deg=20" in out
    prof = CalibrationProfile.load(tmp_path / "p.json")
    assert prof.threshold_deg == 20
    assert prof.ref_unit_vector == pytest.approx((0.0, 0.0, 1.0), abs=0.01)


def test_calibrate_noiseless_jsonl(tmp_path, capsys):
    (tmp_path / "u.json").write_text(json.dumps({"seed": 1, "segments": [{"kind": "UPRIGHT", "duration_s": 3}]}))
    run(capsys, "simulate", "--scenario", "u.json", "--out", "u.jsonl")
    assert run(capsys, "calibrate", "--input", "u.jsonl", "--out", "p.json")[0] == 0
    assert CalibrationProfile.load(tmp_path / "p.json").ref_unit_vector == (0.0, 0.0, 1.0)


@pytest.mark.parametrize("fmt", ["bin", "jsonl"])
def test_calibrate_walking_exits_2(capsys, fmt):
    run(capsys, "simulate", "--scenario", "calibration_walk", "--out", f"walk.{fmt}")
    code, _, err = run(capsys, "calibrate", "--input", f"walk.{fmt}")
    assert code == 2 and err.startswith("error:") and "still" in err


def test_replay_slouch_timeline(tmp_path, capsys):
    code, out, _ = run(capsys, "replay", "--scenario", "slouch_5min", "--figure", "fig.png",
                       "--events-csv", "ev.csv", "--brightness-out", "b.jsonl")
    assert code == 0
    assert events(out) == [(60.0, "NOTIFY_VIBRATE"), (180.0, "DARKEN_START"), (210.0, "BLACKOUT")]
    summary = json.loads(next(ln for ln in out.splitlines() if ln.startswith("summary: "))[9:])
    assert summary["notify_count"] == 1 and summary["blackout_count"] == 1
    assert (tmp_path / "fig.png").stat().st_size > 1000
    assert (tmp_path / "data" / "P000" / "slouch_5min.jsonl").exists()
    assert (tmp_path / "ev.csv").read_text().splitlines()[1] == "60000,NOTIFY_VIBRATE"
    levels = [json.loads(ln)["level"] for ln in (tmp_path / "b.jsonl").read_text().splitlines()]
    assert levels[0] == 1.0 and levels[-1] == 0.0


def test_replay_upright_quiet_and_existing_session(capsys):
    code, out, _ = run(capsys, "replay", "--scenario", "upright_10min")
    assert code == 0 and events(out) == []
    code, _, err = run(capsys, "replay", "--scenario", "upright_10min")
    assert code == 2 and "--force" in err
    assert run(capsys, "replay", "--scenario", "upright_10min", "--force")[0] == 0


def test_replay_trace_matches_scenario(capsys):
    run(capsys, "simulate", "--scenario", "slouch_recover", "--out", "t.bin")
    code, out, _ = run(capsys, "replay", "--trace", "t.bin")
    assert code == 0
    kinds = [k for _, k in events(out)]
    assert kinds == ["NOTIFY_VIBRATE", "DARKEN_START", "BLACKOUT", "RESTORE"]


def test_replay_corrupt_trace_exits_3(tmp_path, capsys):
    run(capsys, "simulate", "--scenario", "calibration_still", "--out", "t.bin")
    data = bytearray((tmp_path / "t.bin").read_bytes())
    for i in range(0, len(data), 16 * 10):
        for j in range(i, min(i + 16 * 6, len(data)), 16):
            data[j + 5] ^= 0xFF
    (tmp_path / "t.bin").write_bytes(bytes(data))
    code, _, err = run(capsys, "replay", "--trace", "t.bin")
    assert code == 3 and "failed to decode" in err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"grace_to_notify_s": 30, "threshold_deg": 50}))
    code, out, _ = run(capsys, "replay", "--scenario", "slouch_5min", "--config", "c.json", "--session-id", "a")
    assert code == 0 and events(out) == []  # 40 deg is below the file's threshold
    code, out, _ = run(capsys, "replay", "--scenario", "slouch_5min", "--config", "c.json",
                       "--threshold-deg", "15", "--session-id", "b")
    assert events(out)[0] == (30.0, "NOTIFY_VIBRATE")
    (tmp_path / "bad.json").write_text(json.dumps({"grace": 1}))
    code, _, err = run(capsys, "replay", "--scenario", "slouch_5min", "--config", "bad.json")
    assert code == 2 and "unknown config key" in err


def test_stats_commands(tmp_path, capsys):
    (tmp_path / "x.csv").write_text("x\n1\n2\n3\n4\n5\n")
    (tmp_path / "y.csv").write_text("y\n3\n5\n7\n9\n11\n")
    code, out, _ = run(capsys, "stats", "pearson", "x.csv", "y.csv")
    res = json.loads(out)
    assert code == 0 and res["statistic"] == pytest.approx(1.0) and res["p_value"] == 0.0
    res = json.loads(run(capsys, "stats", "chi2", "--counts", "10", "20", "30", "40")[1])
    assert res["df"] == 1
    res = json.loads(run(capsys, "stats", "t2", "x.csv", "y.csv", "--variant", "pooled")[1])
    assert res["df"] == 8
    assert json.loads(run(capsys, "stats", "ks", "x.csv")[1])["n"] == 5
    code, _, err = run(capsys, "stats", "pearson", "x.csv")
    assert code == 2 and err.startswith("error:")


def test_usage_and_missing_file(capsys):
    code, _, err = run(capsys, "replay")
    assert code == 2 and err.startswith("error:")
    code, _, err = run(capsys, "replay", "--trace", "nope.bin")
    assert code == 2 and "nope.bin" in err
    assert run(capsys, "frobnicate")[0] == 2


def test_analyze_cohort_text_and_figure(tmp_path, capsys):
    assert run(capsys, "analyze", "fixture", "--out", "f.csv")[0] == 0
    code, out, _ = run(capsys, "analyze", "cohort", "--in", "f.csv", "--format", "text", "--figures-dir", "figs")
    assert code == 0
    assert any(ln.startswith("Neck Flexion") and "50.3" in ln and "-5.3" in ln for ln in out.splitlines())
    assert (tmp_path / "figs" / "posture_measures.png").exists()
    code, out, _ = run(capsys, "analyze", "cohort", "--format", "json")
    assert code == 0 and json.loads(out)["t_variant"] == "WELCH"


def test_analyze_rejects_bad_rows(tmp_path, capsys):
    run(capsys, "analyze", "fixture", "--out", "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    lines.append("Z-1,IG2,PRE,999,30,40,true,false,5.0")
    (tmp_path / "g.csv").write_text("\n".join(lines) + "\n")
    code, out, err = run(capsys, "analyze", "cohort", "--in", "g.csv")
    assert code == 0 and "warning:" in err and "line 602" in err and "999" in err
    assert "50.3" in out


def test_export_adherence(tmp_path, capsys):
    run(capsys, "replay", "--scenario", "upright_10min", "--participant-id", "IG2-001", "--group", "IG2")
    run(capsys, "analyze", "fixture", "--out", "f.csv")
    code, out, _ = run(capsys, "export")
    assert code == 0 and out.splitlines()[1].startswith("IG2-001,IG2,1,1,")
    assert run(capsys, "export", "--clinical", "f.csv", "--out", "merged.csv")[0] == 0
    merged = (tmp_path / "merged.csv").read_text().splitlines()
    assert any(ln.startswith("IG2-001,IG2,PRE") and ln.endswith(",0.1667") for ln in merged)


def test_monitor_on_frame_file_with_failing_sink(tmp_path, capsys):
    run(capsys, "simulate", "--scenario", "calibration_still", "--out", "live.bin")
    code, out, err = run(capsys, "monitor", "--input", "live.bin", "--session-id", "m1", "--max-seconds", "5",
                         "--brightness-cmd", f"{sys.executable} -c \"raise SystemExit(1)\" {{level_pct}}")
    assert code == 0 and "log:" in out
    assert (tmp_path / "data" / "P000" / "m1.jsonl").exists()
