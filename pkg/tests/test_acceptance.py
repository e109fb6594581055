"""Exit criteria. Each test records a PASS/FAIL line shown in the terminal summary."""

import csv
import io
import math
import random
import time
import warnings
from pathlib import Path

import pytest

import oracles
from fsm_props import check_stream, random_config, random_stream
from postureclip.cli import main
from postureclip.cohort import build_report, generate_cohort
from postureclip.errors import BadMagic, BadVersion, ChecksumMismatch
from postureclip.fsm import ESCALATION_KINDS, EventKind, FsmConfig
from postureclip.imu import UPRIGHT_PROFILE
from postureclip.pipeline import Pipeline, readings_from_samples
from postureclip.protocol import Packet, crc16_ccitt_false, decode_packet, encode_packet
from postureclip.simulator import generate, get_scenario
from postureclip.stats import (
    chi2_cdf,
    chi_square_2x2,
    kolmogorov_sf,
    ks_statistic,
    paired_t_test,
    pearson_r,
    t_cdf,
    two_sample_t_test,
)
from postureclip.store import SessionWriter, TruncatedLogWarning, load_records, summarize, write_records

pytestmark = pytest.mark.acceptance

# measure, group -> (before, after, change), transcribed from the published table
PUBLISHED_ROWS = {
    ("neck_flexion_deg", "CG"): (50.0, 49.5, -0.5),
    ("neck_flexion_deg", "IG1"): (50.1, 49.8, -0.3),
    ("neck_flexion_deg", "IG2"): (50.3, 45.0, -5.3),
    ("shoulder_elevation_deg", "CG"): (30.0, 29.8, -0.2),
    ("shoulder_elevation_deg", "IG1"): (30.5, 30.2, -0.3),
    ("shoulder_elevation_deg", "IG2"): (30.2, 27.0, -3.2),
    ("lumbar_curvature_deg", "CG"): (40.0, 40.5, 0.5),
    ("lumbar_curvature_deg", "IG1"): (39.8, 40.0, 0.2),
    ("lumbar_curvature_deg", "IG2"): (39.9, 43.0, 3.1),
    ("forward_head", "IG1"): (45.0, 43.0, -2.0),
    ("forward_head", "IG2"): (47.0, 20.0, -27.0),
    ("rounded_shoulders", "IG1"): (50.0, 48.0, -2.0),
    ("rounded_shoulders", "IG2"): (52.0, 25.0, -27.0),
}


def _run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    assert code == 0, err
    return out


def _pipeline(scenario: str, keep_trace=True, writer=None):
    samples = generate(get_scenario(scenario))
    return Pipeline(FsmConfig(), writer=writer, keep_trace=keep_trace).run(
        readings_from_samples(samples, UPRIGHT_PROFILE))


def test_c1_published_summary_reproduction(criterion, capsys):
    with criterion(1, "published group-summary rows reproduced to one decimal from the shipped fixture"):
        t0 = time.perf_counter()
        out = _run_cli(capsys, "analyze", "cohort", "--format", "csv")
        elapsed = time.perf_counter() - t0
        got = {}
        for rec in csv.DictReader(io.StringIO(out)):
            got[(rec["measure"], rec["group"])] = tuple(float(f"{float(rec[k]):.1f}")
                                                        for k in ("before", "after", "change"))
        missing = [k for k in PUBLISHED_ROWS if k not in got]
        assert not missing, f"rows absent from report: {missing}"
        wrong = {k: (got[k], v) for k, v in PUBLISHED_ROWS.items() if got[k] != v}
        assert not wrong, f"mismatched rows (got, expected): {wrong}"
        assert elapsed < 5.0, f"took {elapsed:.2f} s"


def test_c2_escalation_timeline(criterion):
    with criterion(2, "notify 60 s, darken 180 s, 0.5 at 195 s, blackout 210 s, restore within 3.1 s"):
        t0 = time.perf_counter()
        res = _pipeline("slouch_5min")
        at = {k: [e.t_ms / 1000 for e in res.events if e.kind is k] for k in EventKind}
        assert len(at[EventKind.NOTIFY_VIBRATE]) == 1 and abs(at[EventKind.NOTIFY_VIBRATE][0] - 60.0) <= 0.1
        assert len(at[EventKind.DARKEN_START]) == 1 and abs(at[EventKind.DARKEN_START][0] - 180.0) <= 0.1
        assert len(at[EventKind.BLACKOUT]) == 1 and abs(at[EventKind.BLACKOUT][0] - 210.0) <= 0.1
        level = {t: b for t, _, b, _ in res.trace}[195_000]
        assert abs(level - 0.5) <= 0.02, level

        rec = _pipeline("slouch_recover")
        threshold = FsmConfig().threshold_deg
        first_good = next(t for t, tilt, _, _ in rec.trace if t >= 240_000 and tilt <= threshold)
        restores = [e.t_ms for e in rec.events if e.kind is EventKind.RESTORE]
        assert len(restores) == 1
        assert 0 <= restores[0] - first_good <= 3100, (first_good, restores)
        assert all(b == 1.0 for t, _, b, _ in rec.trace if t >= restores[0])
        assert time.perf_counter() - t0 < 5.0


def test_c3_walk_suppression(criterion):
    with criterion(3, "slouch with walking motion overlaid emits no notify/darken/blackout"):
        res = _pipeline("slouch_walk")
        assert min(t for t, *_ in res.trace) == 0 and max(t for t, *_ in res.trace) >= 299_000
        assert sum(1 for _, tilt, _, _ in res.trace if tilt > 15.0) > 2500  # the posture really is bad
        escalations = [e for e in res.events if e.kind in ESCALATION_KINDS]
        assert escalations == [], escalations
        assert all(b == 1.0 for _, _, b, _ in res.trace)


def test_c4_fsm_property_suite(criterion):
    with criterion(4, "1000 random reading streams uphold every automaton invariant"):
        t0 = time.perf_counter()
        seen = set()
        for seed in range(1000):
            rng = random.Random(seed)
            cfg = random_config(rng) if seed % 10 else FsmConfig()
            n = rng.randrange(50, 600) if seed % 10 else 3000
            seen.update(e.kind for e in check_stream(random_stream(rng, n), cfg))
        assert seen == set(EventKind), f"streams never reached {set(EventKind) - seen}"
        assert time.perf_counter() - t0 < 60.0


def test_c5_protocol(criterion):
    with criterion(5, "10k packet round-trips, all 112 single-bit flips rejected, CRC 0x29B1"):
        assert crc16_ccitt_false(b"123456789") == 0x29B1 == oracles.crc16_bitwise(b"123456789")
        rng = random.Random(2024)
        for _ in range(10_000):
            p = Packet(rng.randrange(1 << 16), rng.randrange(1 << 16), rng.randint(-18000, 18000),
                       rng.randint(-18000, 18000), rng.randrange(1 << 16), rng.randrange(4))
            frame = encode_packet(p)
            assert len(frame) == 16 and decode_packet(frame) == p
            assert int.from_bytes(frame[14:], "little") == oracles.crc16_bitwise(frame[:14])
        golden = encode_packet(Packet(0x0102, 777, 4000, -9000, 123, 1))
        rejected = 0
        for bit in range(112):
            bad = bytearray(golden)
            bad[bit // 8] ^= 1 << (bit % 8)
            try:
                decode_packet(bytes(bad))
            except (BadMagic, BadVersion, ChecksumMismatch):
                rejected += 1
        assert rejected == 112


def _random_sample(rng, n):
    kind = rng.randrange(3)
    if kind == 0:
        return [rng.gauss(rng.uniform(-50, 50), rng.uniform(0.1, 20)) for _ in range(n)]
    if kind == 1:
        return [rng.expovariate(rng.uniform(0.1, 2.0)) for _ in range(n)]
    return [float(rng.randint(0, 20)) + rng.random() * 1e-3 for _ in range(n)]


def _rel(a, b):
    return abs(a - b) / abs(b) if b else abs(a)


def test_c6_stats_oracles(criterion):
    with criterion(6, "tests match definitional oracles to 1e-9, CDFs to 1e-10, KS D exact"):
        t0 = time.perf_counter()
        rng = random.Random(606)
        for _ in range(100):
            n = rng.randrange(5, 60)
            pre = _random_sample(rng, n)
            post = [v + rng.gauss(rng.uniform(-3, 3), rng.uniform(0.5, 5)) for v in pre]
            res = paired_t_test(pre, post)
            assert _rel(res.statistic, oracles.paired_t(pre, post)) < 1e-9
            assert _rel(res.p_value, oracles.t_two_sided_p(res.statistic, n - 1)) < 1e-9

            a, b = _random_sample(rng, rng.randrange(3, 50)), _random_sample(rng, rng.randrange(3, 50))
            pooled = two_sample_t_test(a, b, "POOLED")
            assert _rel(pooled.statistic, oracles.pooled_t(a, b)) < 1e-9
            assert _rel(pooled.p_value, oracles.t_two_sided_p(pooled.statistic, pooled.df)) < 1e-9
            welch = two_sample_t_test(a, b, "WELCH")
            t, df = oracles.welch_t(a, b)
            assert _rel(welch.statistic, t) < 1e-9 and _rel(welch.df, df) < 1e-9
            assert _rel(welch.p_value, oracles.t_two_sided_p(t, df)) < 1e-9

            table = [[rng.randint(1, 200), rng.randint(1, 200)], [rng.randint(1, 200), rng.randint(1, 200)]]
            chi = chi_square_2x2(table)
            assert _rel(chi.statistic, oracles.chi_square(table)) < 1e-9
            assert _rel(chi.p_value, oracles.chi2_sf(chi.statistic, 1)) < 1e-9

            x = _random_sample(rng, n)
            y = [rng.uniform(-1, 1) * v + rng.gauss(0, 5) for v in x]
            r = pearson_r(x, y)
            assert _rel(r.statistic, oracles.pearson(x, y)) < 1e-9

        for (tv, df), want in {(0.5, 1): 0.64758361765043327418, (2.5, 10): 0.98427657788169559788,
                               (-4.22, 54): 0.000047026628344601576156, (3.11, 54): 0.99850724721906674258,
                               (1.96, 1000): 0.97486340752212564078}.items():
            assert abs(t_cdf(tv, df) - want) < 1e-10
        for (xv, k), want in {(3.841458820694124, 1): 0.94999999999999987762, (10.24, 1): 0.99862572412416823498,
                              (0.5, 2): 0.22119921692859513175, (12.0, 7): 0.89944113149164109618}.items():
            assert abs(chi2_cdf(xv, k) - want) < 1e-10
        for lam, want in {0.5: 0.96394524366487509439, 1.0: 0.2699996716773545212,
                          1.36: 0.04948587675537788364, 2.0: 0.00067092525577969534654}.items():
            assert abs(kolmogorov_sf(lam) - want) < 1e-10

        for _ in range(50):
            x = _random_sample(rng, rng.randrange(5, 80))
            mu, sd = sum(x) / len(x), max(1e-3, (sum((v - sum(x) / len(x)) ** 2 for v in x) / len(x)) ** 0.5)
            cdf = lambda v: 0.5 * math.erfc(-(v - mu) / (sd * math.sqrt(2.0)))
            assert ks_statistic(x, cdf) == oracles.ks_sup_bruteforce(x, cdf)
        assert time.perf_counter() - t0 < 60.0


def test_c7_planted_correlation(criterion):
    with criterion(7, "planted adherence correlation 0.45 (n=55) recovered in [0.30, 0.60], p < 0.05"):
        rows = generate_cohort(seed=42, sizes={"IG2": 55}, exact=False,
                               adherence_r={"IG2": {"neck_flexion_deg": 0.45}})
        report = build_report(rows)
        (neck,) = [c for c in report.correlations if c.group == "IG2" and c.measure == "neck_flexion_deg"]
        assert neck.result.n == 55
        assert 0.30 <= neck.result.statistic <= 0.60, neck.result.statistic
        assert neck.result.p_value < 0.05, neck.result.p_value


def _simulate_and_replay(capsys, workdir: Path, monkeypatch):
    monkeypatch.chdir(workdir)
    _run_cli(capsys, "simulate", "--scenario", "slouch_recover", "--seed", "42", "--out", "trace.bin")
    replay = _run_cli(capsys, "replay", "--trace", "trace.bin", "--seed", "42", "--events-csv", "events.csv",
                      "--brightness-out", "brightness.jsonl")
    report = _run_cli(capsys, "analyze", "cohort", "--format", "json")
    names = ["trace.bin", "events.csv", "brightness.jsonl", "data/P000/trace.jsonl", "data/P000/trace.meta.json"]
    return {n: (workdir / n).read_bytes() for n in names} | {"replay stdout": replay.encode(),
                                                              "cohort report": report.encode()}


def test_c8_end_to_end_determinism(criterion, capsys, tmp_path, monkeypatch):
    with criterion(8, "simulate -> replay twice with seed 42 is byte-identical"):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        first = _simulate_and_replay(capsys, tmp_path / "a", monkeypatch)
        second = _simulate_and_replay(capsys, tmp_path / "b", monkeypatch)
        differing = [k for k in first if first[k] != second[k]]
        assert not differing, f"outputs differ: {differing}"
        assert b"RESTORE" in first["events.csv"]


def test_c9_session_store_robustness(criterion, tmp_path):
    with criterion(9, "truncated log reloads with one warning; 5 h session round-trips in < 10 s"):
        log = tmp_path / "cut.jsonl"
        writer = SessionWriter(log)
        _pipeline("slouch_5min", keep_trace=False, writer=writer)
        writer.close()
        data = log.read_bytes()
        complete = data.count(b"\n")
        log.write_bytes(data + data.splitlines(keepends=True)[5][:17])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            recs = load_records(log)
        assert len(recs) == complete
        assert [w.category for w in caught] == [TruncatedLogWarning]
        assert summarize(recs).blackout_count == 1

        long_log = tmp_path / "day.jsonl"
        writer = SessionWriter(long_log)
        _pipeline("office_day", keep_trace=False, writer=writer)
        writer.close()
        records = load_records(long_log)
        t0 = time.perf_counter()
        copy = tmp_path / "copy.jsonl"
        write_records(copy, records)
        again = load_records(copy)
        summary = summarize(again)
        elapsed = time.perf_counter() - t0
        n_samples = sum(1 for line in long_log.read_text().splitlines() if '"sample"' in line)
        assert again == records
        assert 17_000 <= n_samples <= 19_000, n_samples
        assert summary.wear_hours == pytest.approx(5.0)
        assert elapsed < 10.0, f"{elapsed:.2f} s"
