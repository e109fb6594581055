"""Append-only JSON Lines session logs.

Layout: ``<data_dir>/<participant_id>/<session_id>.jsonl`` with a sibling
``<session_id>.meta.json``. Every line is a self-contained object with a
``"type"`` of ``"sample"`` or ``"event"``, so a file cut off mid-write still
parses up to its last complete line.
"""

from __future__ import annotations

import json
import os
import statistics
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Union

from .errors import EmptySession, OutOfOrderTimestamp, UnknownSession, ValidationError
from .fsm import EventKind, FeedbackEvent
from .imu import DEFAULT_THRESHOLD_DEG

GROUPS = ("CG", "IG1", "IG2")


class TruncatedLogWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SessionMeta:
    session_id: str
    participant_id: str
    group: str
    started_at: str
    device_id: int = 0
    threshold_deg: float = DEFAULT_THRESHOLD_DEG

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValidationError(f"group must be one of {GROUPS}, got {self.group!r}")
        for name in ("session_id", "participant_id"):
            value = getattr(self, name)
            if not value or os.sep in value or value.startswith("."):
                raise ValidationError(f"{name} {value!r} is not usable as a file name")


@dataclass(frozen=True)
class SampleRecord:
    t_ms: int
    tilt_deg: float
    in_motion: bool
    brightness: float


Record = Union[SampleRecord, FeedbackEvent]


def record_to_json(rec: Record) -> str:
    if isinstance(rec, SampleRecord):
        d = {"type": "sample", **asdict(rec)}
    else:
        d = {"type": "event", "t_ms": rec.t_ms, "kind": rec.kind.value}
    return json.dumps(d, sort_keys=True)


def record_from_dict(d: dict) -> Record:
    kind = d.get("type")
    if kind == "sample":
        return SampleRecord(int(d["t_ms"]), float(d["tilt_deg"]), bool(d["in_motion"]), float(d["brightness"]))
    if kind == "event":
        return FeedbackEvent(int(d["t_ms"]), EventKind(d["kind"]))
    raise ValueError(f"unknown record type {kind!r}")


class SessionWriter:
    """Single writer for one session file. Enforces time order on append."""

    def __init__(self, path: Path, fsync_on_close: bool = True):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")
        self._fsync_on_close = fsync_on_close
        self._last_t: int | None = None
        self._last_sample_t: int | None = None
        self.count = 0

    def append(self, rec: Record) -> None:
        t = rec.t_ms
        if self._last_t is not None and t < self._last_t:
            raise OutOfOrderTimestamp(f"record at {t} ms after {self._last_t} ms")
        if isinstance(rec, SampleRecord) and self._last_sample_t is not None and t <= self._last_sample_t:
            raise OutOfOrderTimestamp(f"sample at {t} ms not after previous sample at {self._last_sample_t} ms")
        self._fh.write(record_to_json(rec) + "\n")
        self._fh.flush()
        self._last_t = t
        if isinstance(rec, SampleRecord):
            self._last_sample_t = t
        self.count += 1

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.flush()
        if self._fsync_on_close:
            os.fsync(self._fh.fileno())
        self._fh.close()


class SessionStore:
    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self._writers: dict[str, SessionWriter] = {}

    def _paths(self, meta: SessionMeta) -> tuple[Path, Path]:
        d = self.data_dir / meta.participant_id
        return d / f"{meta.session_id}.jsonl", d / f"{meta.session_id}.meta.json"

    def open_session(self, meta: SessionMeta) -> SessionWriter:
        if meta.session_id in self._writers or self.find(meta.session_id) is not None:
            raise ValidationError(f"session {meta.session_id!r} already exists")
        log_path, meta_path = self._paths(meta)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(meta_path, "w", encoding="utf-8") as f:
            json.dump(asdict(meta), f, indent=2, sort_keys=True)
            f.write("\n")
        writer = SessionWriter(log_path)
        self._writers[meta.session_id] = writer
        return writer

    def append(self, session_id: str, rec: Record) -> None:
        try:
            writer = self._writers[session_id]
        except KeyError:
            raise UnknownSession(f"session {session_id!r} is not open") from None
        writer.append(rec)

    def close(self, session_id: str | None = None) -> None:
        ids = [session_id] if session_id else list(self._writers)
        for sid in ids:
            self._writers.pop(sid).close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def metas(self) -> list[SessionMeta]:
        out = []
        for p in sorted(self.data_dir.glob("*/*.meta.json")):
            with open(p, encoding="utf-8") as f:
                out.append(SessionMeta(**json.load(f)))
        return out

    def find(self, session_id: str) -> SessionMeta | None:
        for meta in self.metas():
            if meta.session_id == session_id:
                return meta
        return None

    def load(self, session_id: str) -> tuple[SessionMeta, list[Record]]:
        meta = self.find(session_id)
        if meta is None:
            raise UnknownSession(f"no session {session_id!r} under {self.data_dir}")
        return meta, load_records(self._paths(meta)[0])


def load_records(path) -> list[Record]:
    """Parse a session log, skipping lines that are incomplete or unreadable."""
    records: list[Record] = []
    bad: list[int] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.endswith("\n"):
                bad.append(lineno)
                continue
            if not line.strip():
                continue
            try:
                records.append(record_from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError):
                bad.append(lineno)
    if bad:
        warnings.warn(f"{path}: skipped {len(bad)} unreadable line(s): {bad[:10]}",
                      TruncatedLogWarning, stacklevel=2)
    return records


def write_records(path, records: Iterable[Record]) -> int:
    w = SessionWriter(Path(path), fsync_on_close=False)
    try:
        for rec in records:
            w.append(rec)
    finally:
        w.close()
    return w.count


@dataclass(frozen=True)
class SessionSummary:
    duration_s: float
    wear_hours: float
    pct_time_above_threshold: float
    notify_count: int
    blackout_count: int
    mean_tilt_deg: float

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(records: Iterable[Record], threshold_deg: float = DEFAULT_THRESHOLD_DEG) -> SessionSummary:
    """Aggregate one time-ordered session.

    Each sample stands for the interval up to the next sample; the last one
    gets the median spacing, so an evenly sampled hour sums to 3600 s.
    """
    samples: list[SampleRecord] = []
    notify = blackout = 0
    for rec in records:
        if isinstance(rec, SampleRecord):
            if samples and rec.t_ms <= samples[-1].t_ms:
                raise OutOfOrderTimestamp("summarize needs time-ordered samples")
            samples.append(rec)
        elif rec.kind is EventKind.NOTIFY_VIBRATE:
            notify += 1
        elif rec.kind is EventKind.BLACKOUT:
            blackout += 1
    if not samples:
        raise EmptySession("session has no samples")
    gaps = [b.t_ms - a.t_ms for a, b in zip(samples, samples[1:])]
    gaps.append(round(statistics.median(gaps)) if gaps else 1000)
    total_ms = sum(gaps)
    above_ms = sum(g for s, g in zip(samples, gaps) if s.tilt_deg > threshold_deg)
    duration_s = total_ms / 1000.0
    return SessionSummary(
        duration_s=duration_s,
        wear_hours=duration_s / 3600.0,
        pct_time_above_threshold=100.0 * above_ms / total_ms,
        notify_count=notify,
        blackout_count=blackout,
        mean_tilt_deg=statistics.fmean(s.tilt_deg for s in samples),
    )
