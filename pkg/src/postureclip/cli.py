"""``postureclip`` command line.

Exit codes: 0 ok, 1 runtime failure, 2 usage/validation, 3 corrupt input.
Every failure prints a single ``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import queue
import sys
import threading
import time
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

from . import cohort as cohort_mod
from .config import RunConfig, load_config
from .errors import CorruptInputError, FrameError, MotionDuringCalibration, PostureClipError, ValidationError
from .imu import UPRIGHT_PROFILE, CalibrationProfile, ImuSample, calibrate
from .pipeline import Pipeline, packets_to_samples, readings_from_packets, readings_from_samples
from .protocol import MAGIC, FrameReader, decode_packet, iter_trace
from .screen import CommandSink, SimulatedSink
from .simulator import generate, get_scenario, samples_from_jsonl, samples_to_jsonl, to_frames
from .stats import TVariant, chi_square_2x2, ks_normality_test, paired_t_test, pearson_r, two_sample_t_test
from .store import SessionMeta, SessionStore, load_records, summarize

log = logging.getLogger("postureclip")

EPOCH = "1970-01-01T00:00:00Z"
CORRUPT_FRACTION = 0.5


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------- input helpers


def _is_frame_file(path: Path) -> bool:
    if path.suffix in (".bin", ".frames"):
        return True
    if path.suffix in (".jsonl", ".json"):
        return False
    with open(path, "rb") as f:
        head = f.read(1)
    return bool(head) and head[0] == MAGIC


def decode_trace(data: bytes):
    """Decode every record of a frame trace; returns (packets, failures, total)."""
    packets, failures, total = [], 0, 0
    for rec in iter_trace(data):
        total += 1
        try:
            packets.append(decode_packet(rec))
        except FrameError as exc:
            failures += 1
            log.warning("frame %d dropped: %s", total - 1, exc)
    return packets, failures, total


def _load_packets(path: Path):
    packets, failures, total = decode_trace(path.read_bytes())
    if total and failures / total > CORRUPT_FRACTION:
        raise CorruptInputError(f"{path}: {failures} of {total} frames failed to decode")
    return packets


def _load_samples(path: Path) -> list[ImuSample]:
    with open(path, encoding="utf-8") as f:
        return samples_from_jsonl(f)


def _read_column(path: str) -> list[float]:
    values = []
    with open(path, newline="", encoding="utf-8") as f:
        for i, row in enumerate(csv.reader(f)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if i == 0:
                    continue  # header
                raise ValidationError(f"{path}: line {i + 1}: not a number: {row[0]!r}") from None
    return values


def _config(args, base: dict | None = None) -> RunConfig:
    flags = {
        "data_dir": getattr(args, "data_dir", None),
        "threshold_deg": getattr(args, "threshold_deg", None),
        "ema_alpha": getattr(args, "ema_alpha", None),
        "brightness_cmd": getattr(args, "brightness_cmd", None),
        "notify_cmd": getattr(args, "notify_cmd", None),
    }
    return load_config(getattr(args, "config", None), flags, base)


def _profile(args) -> CalibrationProfile | None:
    return CalibrationProfile.load(args.profile) if getattr(args, "profile", None) else None


# --------------------------------------------------------------------------- commands


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    threshold = args.threshold_deg if args.threshold_deg is not None else cfg.fsm.threshold_deg
    if args.scenario:
        samples = generate(get_scenario(args.scenario, args.seed), cfg.sample_hz)
    else:
        path = Path(args.input)
        if _is_frame_file(path):
            pairs = list(packets_to_samples(_load_packets(path), cfg.sample_hz))
            moving = [s.t_ms for s, j in pairs if j is not None and j > cfg.motion.jerk_thresh_milli_g]
            if moving:
                raise MotionDuringCalibration(
                    f"movement detected at t={moving[0]} ms ({len(moving)} frames above "
                    f"{cfg.motion.jerk_thresh_milli_g:g} milli-g jerk); hold still while calibrating")
            samples = [s for s, _ in pairs]
        else:
            samples = _load_samples(path)
    profile = calibrate(samples, threshold, created_at=args.created_at)
    out = Path(args.out or Path(cfg.data_dir) / "profile.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    profile.save(out)
    x, y, z = profile.ref_unit_vector
    print(f"ref=({x:.6f}, {y:.6f}, {z:.6f}) threshold_deg={profile.threshold_deg:g} "
          f"samples={profile.sample_count} -> {out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    spec = get_scenario(args.scenario, args.seed)
    samples = generate(spec, cfg.sample_hz)
    out = Path(args.out)
    fmt = args.format or ("jsonl" if out.suffix == ".jsonl" else "frames")
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "frames":
        out.write_bytes(to_frames(samples, args.device_id))
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            samples_to_jsonl(samples, f)
    print(f"{len(samples)} samples ({spec.duration_s:g} s, seed {spec.seed}) -> {out} [{fmt}]")
    return 0


def _open_session(cfg: RunConfig, args, session_id: str, started_at: str, threshold: float):
    store = SessionStore(cfg.data_dir)
    existing = store.find(session_id)
    if existing is not None:
        if not getattr(args, "force", False):
            raise ValidationError(f"session {session_id!r} already exists in {cfg.data_dir} (use --force)")
        pdir = Path(cfg.data_dir) / existing.participant_id
        for p in (pdir / f"{session_id}.jsonl", pdir / f"{session_id}.meta.json"):
            p.unlink(missing_ok=True)
    meta = SessionMeta(session_id, args.participant_id, args.group, started_at, args.device_id, threshold)
    return store, meta, store.open_session(meta)


def _event_table(events) -> str:
    lines = ["t_s\tevent"]
    lines += [f"{ev.t_ms / 1000:.1f}\t{ev.kind.value}" for ev in events]
    return "\n".join(lines)


def cmd_replay(args) -> int:
    profile = _profile(args)
    base = {"threshold_deg": profile.threshold_deg} if profile else None
    cfg = _config(args, base)
    profile = profile or CalibrationProfile(UPRIGHT_PROFILE.ref_unit_vector, cfg.fsm.threshold_deg, "", 1)

    if args.scenario:
        source_name = args.scenario
        readings = readings_from_samples(generate(get_scenario(args.scenario, args.seed), cfg.sample_hz),
                                         profile, cfg.ema_alpha, cfg.motion)
    else:
        path = Path(args.trace)
        source_name = path.stem
        if _is_frame_file(path):
            readings = readings_from_packets(_load_packets(path), profile, cfg.ema_alpha, cfg.motion, cfg.sample_hz)
        else:
            readings = readings_from_samples(_load_samples(path), profile, cfg.ema_alpha, cfg.motion)

    session_id = args.session_id or source_name
    store, meta, writer = _open_session(cfg, args, session_id, args.started_at or EPOCH, cfg.fsm.threshold_deg)
    sink = SimulatedSink()
    pipe = Pipeline(cfg.fsm, sink, writer, keep_trace=bool(args.figure))
    try:
        result = pipe.run(readings)
    finally:
        store.close()
    log_path = Path(cfg.data_dir) / meta.participant_id / f"{session_id}.jsonl"
    summary = summarize(load_records(log_path), cfg.fsm.threshold_deg)

    if args.brightness_out:
        with open(args.brightness_out, "w", encoding="utf-8", newline="\n") as f:
            sink.dump_jsonl(f)
    if args.events_csv:
        with open(args.events_csv, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["t_ms", "kind"])
            for ev in result.events:
                w.writerow([ev.t_ms, ev.kind.value])
    if args.figure:
        from .plotting import session_figure

        session_figure(result.trace, result.events, cfg.fsm.threshold_deg, args.figure)

    print(_event_table(result.events))
    print("summary: " + json.dumps(summary.to_dict(), sort_keys=True))
    print(f"log: {log_path}")
    return 0


def cmd_monitor(args) -> int:
    profile = _profile(args)
    base = {"threshold_deg": profile.threshold_deg} if profile else None
    cfg = _config(args, base)
    profile = profile or CalibrationProfile(UPRIGHT_PROFILE.ref_unit_vector, cfg.fsm.threshold_deg, "", 1)
    from .imu import TiltEstimator

    if cfg.brightness_cmd or cfg.notify_cmd:
        sink = CommandSink(cfg.brightness_cmd, cfg.notify_cmd)
    else:
        sink = SimulatedSink()
    started = datetime.now(timezone.utc).replace(microsecond=0)
    session_id = args.session_id or "monitor-" + started.strftime("%Y%m%dT%H%M%SZ")
    store, meta, writer = _open_session(cfg, args, session_id,
                                        started.isoformat().replace("+00:00", "Z"), cfg.fsm.threshold_deg)

    packets: queue.Queue = queue.Queue(maxsize=args.queue_size)
    dropped = [0]
    eof = threading.Event()
    stream = sys.stdin.buffer if args.input == "-" else open(args.input, "rb", buffering=0)

    def ingest():
        reader = FrameReader()
        try:
            while True:
                chunk = stream.read1(4096) if hasattr(stream, "read1") else stream.read(4096)
                if not chunk:
                    break
                for p in reader.feed(chunk):
                    try:
                        packets.put_nowait(p)
                    except queue.Full:
                        dropped[0] += 1
        finally:
            eof.set()

    thread = threading.Thread(target=ingest, name="frame-ingest", daemon=True)
    thread.start()
    est = TiltEstimator(profile, cfg.ema_alpha, cfg.motion)
    pipe = Pipeline(cfg.fsm, sink, writer)
    t0 = time.monotonic()
    period = 1.0 / cfg.fsm.tick_hz
    first = True
    try:
        while True:
            if args.max_seconds is not None and time.monotonic() - t0 >= args.max_seconds:
                break
            try:
                p = packets.get(timeout=period)
            except queue.Empty:
                if eof.is_set() and packets.empty():
                    break
                continue
            t_ms = int((time.monotonic() - t0) * 1000)
            (sample, _), = packets_to_samples([p], cfg.sample_hz)
            sample = ImuSample(t_ms, sample.ax, sample.ay, sample.az)
            reading = est.update_direction(sample, None if first else float(p.jerk_milli_g))
            first = False
            for ev in pipe.feed(reading):
                print(f"{ev.t_ms / 1000:.1f}\t{ev.kind.value}", flush=True)
    except KeyboardInterrupt:
        pass
    finally:
        store.close()
        if stream is not sys.stdin.buffer:
            stream.close()
    if dropped[0]:
        log.warning("%d frames dropped because the tick loop fell behind", dropped[0])
    log_path = Path(cfg.data_dir) / meta.participant_id / f"{session_id}.jsonl"
    records = load_records(log_path)
    if records:
        try:
            print("summary: " + json.dumps(summarize(records, cfg.fsm.threshold_deg).to_dict(), sort_keys=True))
        except PostureClipError:
            pass
    print(f"log: {log_path}")
    return 0


def cmd_stats(args) -> int:
    test = args.test
    if test == "paired-t":
        res = paired_t_test(_read_column(args.files[0]), _read_column(args.files[1]))
    elif test == "t2":
        res = two_sample_t_test(_read_column(args.files[0]), _read_column(args.files[1]), args.variant.upper())
    elif test == "pearson":
        res = pearson_r(_read_column(args.files[0]), _read_column(args.files[1]))
    elif test == "ks":
        res = ks_normality_test(_read_column(args.files[0]))
    else:
        if args.counts:
            table = args.counts
        else:
            with open(args.files[0], newline="", encoding="utf-8") as f:
                table = [float(c) for row in csv.reader(f) for c in row if c.strip()]
        if len(table) != 4:
            raise ValidationError("chi2 needs exactly four counts (a b / c d)")
        res = chi_square_2x2(table)
    print(json.dumps(res.to_dict(), sort_keys=True))
    return 0


_NEEDS = {"paired-t": 2, "t2": 2, "pearson": 2, "ks": 1, "chi2": 1}


def cmd_analyze(args) -> int:
    if args.what == "fixture":
        sizes = cohort_mod.STUDY_SIZES if args.sizes == "study" else cohort_mod.FIXTURE_SIZES
        rows = cohort_mod.generate_cohort(seed=args.seed if args.seed is not None else 42, sizes=sizes)
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            with open(args.out, "w", encoding="utf-8", newline="") as f:
                cohort_mod.write_cohort(rows, f)
            print(f"{len(rows)} rows -> {args.out}")
        else:
            cohort_mod.write_cohort(rows, sys.stdout)
        return 0

    if not args.input:
        args.input = str(cohort_mod.SHIPPED_FIXTURE)
    cfg = _config(args)
    rows, rejects = cohort_mod.read_cohort(args.input)
    for line, reason in rejects:
        print(f"warning: {args.input}: line {line}: {reason}", file=sys.stderr)
    variant = TVariant(args.t_variant.upper()) if args.t_variant else cfg.t_variant
    report = cohort_mod.build_report(rows, cohort_mod.ReportConfig(t_variant=variant))
    text = cohort_mod.render_report(report, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.figures_dir:
        from .plotting import cohort_figure

        fig_dir = Path(args.figures_dir)
        fig_dir.mkdir(parents=True, exist_ok=True)
        path = cohort_figure(report, fig_dir / "posture_measures.png")
        print(f"figure: {path}", file=sys.stderr)
    return 0


def adherence_by_participant(store: SessionStore) -> dict[str, dict]:
    """Wear hours per day from stored sessions, one entry per participant."""
    acc: dict[str, dict] = defaultdict(lambda: {"group": None, "sessions": 0, "days": set(), "hours": 0.0})
    for meta in store.metas():
        _, records = store.load(meta.session_id)
        try:
            s = summarize(records, meta.threshold_deg)
        except PostureClipError:
            continue
        a = acc[meta.participant_id]
        a["group"] = meta.group
        a["sessions"] += 1
        a["days"].add(meta.started_at[:10])
        a["hours"] += s.wear_hours
    return {pid: {"group": a["group"], "sessions": a["sessions"], "days": len(a["days"]),
                  "wear_hours": a["hours"], "adherence_hours_per_day": a["hours"] / max(1, len(a["days"]))}
            for pid, a in sorted(acc.items())}


def cmd_export(args) -> int:
    cfg = _config(args)
    adherence = adherence_by_participant(SessionStore(cfg.data_dir))
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        if args.clinical:
            rows = cohort_mod.load_cohort(args.clinical)
            merged = []
            for r in rows:
                a = adherence.get(r.participant_id)
                if a is not None and r.group != "CG":
                    r = cohort_mod.CohortRow(**{**r.__dict__,
                                                "adherence_hours_per_day": round(a["adherence_hours_per_day"], 4)})
                merged.append(r)
            cohort_mod.write_cohort(merged, out)
        else:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(["participant_id", "group", "sessions", "days", "wear_hours", "adherence_hours_per_day"])
            for pid, a in adherence.items():
                w.writerow([pid, a["group"], a["sessions"], a["days"], repr(a["wear_hours"]),
                            repr(a["adherence_hours_per_day"])])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--data-dir", default=argparse.SUPPRESS, help="session store root")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit RNG seed")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="postureclip", description="Posture clip receiver, simulator and study analysis",
                parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def session_flags(sp):
        sp.add_argument("--profile", help="calibration profile JSON")
        sp.add_argument("--session-id")
        sp.add_argument("--participant-id", default="P000")
        sp.add_argument("--group", default="IG2", choices=["CG", "IG1", "IG2"])
        sp.add_argument("--device-id", type=int, default=0)
        sp.add_argument("--threshold-deg", type=float)
        sp.add_argument("--ema-alpha", type=float)
        sp.add_argument("--force", action="store_true", help="replace an existing session with the same id")

    sp = sub.add_parser("calibrate", parents=[common], help="build a calibration profile")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="frame trace (.bin) or JSONL samples")
    src.add_argument("--scenario", help="built-in scenario name or scenario JSON")
    sp.add_argument("--threshold-deg", type=float)
    sp.add_argument("--out", help="profile path (default <data-dir>/profile.json)")
    sp.add_argument("--created-at", help="RFC 3339 timestamp to store instead of now")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("simulate", parents=[common], help="materialize a scenario trace")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=["frames", "jsonl"])
    sp.add_argument("--device-id", type=int, default=0)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("replay", parents=[common], help="run the receiver pipeline offline")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace")
    src.add_argument("--scenario")
    session_flags(sp)
    sp.add_argument("--started-at", help=f"session start stamp (default {EPOCH} for reproducible logs)")
    sp.add_argument("--events-csv")
    sp.add_argument("--brightness-out", help="JSON Lines dump of the simulated display sink")
    sp.add_argument("--figure", help="write a tilt/brightness timeline PNG")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("monitor", parents=[common], help="live pipeline on a frame stream")
    sp.add_argument("--input", default="-", help="frame stream: '-' for stdin or a file/named pipe")
    session_flags(sp)
    sp.add_argument("--brightness-cmd")
    sp.add_argument("--notify-cmd")
    sp.add_argument("--max-seconds", type=float)
    sp.add_argument("--queue-size", type=int, default=256)
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("stats", parents=[common], help="run one hypothesis test on CSV columns")
    sp.add_argument("test", choices=list(_NEEDS))
    sp.add_argument("files", nargs="*")
    sp.add_argument("--variant", default="welch", choices=["welch", "pooled"])
    sp.add_argument("--counts", type=float, nargs=4, metavar=("A", "B", "C", "D"))
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("analyze", parents=[common], help="cohort analysis")
    sp.add_argument("what", choices=["cohort", "fixture"])
    sp.add_argument("--in", dest="input", help="cohort CSV (default: the bundled fixture)")
    sp.add_argument("--format", default="text", choices=["text", "json", "csv"])
    sp.add_argument("--out")
    sp.add_argument("--figures-dir")
    sp.add_argument("--t-variant", choices=["welch", "pooled"])
    sp.add_argument("--sizes", default="fixture", choices=["fixture", "study"],
                    help="fixture arm sizes: 100 each, or the study's 56/54/55")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("export", parents=[common], help="per-participant adherence from stored sessions")
    sp.add_argument("--clinical", help="cohort CSV whose adherence column should be filled in")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for name in ("config", "data_dir", "seed"):
            if not hasattr(args, name):
                setattr(args, name, None)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        if args.command == "stats":
            need = 0 if (args.test == "chi2" and args.counts) else _NEEDS[args.test]
            if len(args.files) != need:
                raise UsageError(f"stats {args.test} takes {need} file argument(s)")
        return args.func(args)
    except PostureClipError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
