"""Escalating posture feedback automaton.

Sustained above-threshold tilt walks through notify -> darken ramp ->
blackout. Motion (or its hold-off tail) suspends feedback and freezes the
bad-posture timer; a debounced run of good posture ends the episode.

Timers are kept in integer milliseconds so that stage boundaries land
exactly on the tick where they are reached.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Iterable

from .errors import NonMonotonicTime, ValidationError
from .imu import DEFAULT_THRESHOLD_DEG, TiltReading


class Mode(str, Enum):
    UPRIGHT = "UPRIGHT"
    DEVIATED = "DEVIATED"
    NOTIFIED = "NOTIFIED"
    DARKENING = "DARKENING"
    BLACKOUT = "BLACKOUT"
    SUPPRESSED = "SUPPRESSED"


class EventKind(str, Enum):
    NOTIFY_VIBRATE = "NOTIFY_VIBRATE"
    DARKEN_START = "DARKEN_START"
    BLACKOUT = "BLACKOUT"
    RESTORE = "RESTORE"
    SUPPRESS_START = "SUPPRESS_START"
    SUPPRESS_END = "SUPPRESS_END"


ESCALATION_KINDS = frozenset({EventKind.NOTIFY_VIBRATE, EventKind.DARKEN_START, EventKind.BLACKOUT})


@dataclass(frozen=True)
class FeedbackEvent:
    t_ms: int
    kind: EventKind


@dataclass(frozen=True)
class FsmConfig:
    threshold_deg: float = DEFAULT_THRESHOLD_DEG
    grace_to_notify_s: float = 60.0
    notify_to_darken_s: float = 120.0
    darken_ramp_s: float = 30.0
    recover_debounce_s: float = 3.0
    motion_holdoff_s: float = 10.0
    tick_hz: float = 10.0
    # None: one nudge per episode. Otherwise re-nudge at this period while deviated.
    repeat_notify_s: float | None = None

    def __post_init__(self):
        for name in ("grace_to_notify_s", "notify_to_darken_s", "darken_ramp_s",
                     "recover_debounce_s", "motion_holdoff_s", "tick_hz"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 < self.threshold_deg < 90.0:
            raise ValidationError(f"threshold_deg must be in (0, 90), got {self.threshold_deg}")
        if self.repeat_notify_s is not None and not self.repeat_notify_s > 0:
            raise ValidationError("repeat_notify_s must be > 0 when set")

    @property
    def darken_onset_s(self) -> float:
        return self.grace_to_notify_s + self.notify_to_darken_s

    @classmethod
    def from_dict(cls, d: dict) -> "FsmConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown FsmConfig keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "FsmConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _ms(seconds: float) -> int:
    return round(seconds * 1000)


def brightness_at(bad_posture_elapsed_s: float, config: FsmConfig) -> float:
    """Screen level for a given amount of sustained bad posture."""
    if bad_posture_elapsed_s < 0:
        raise ValidationError("elapsed time must be >= 0")
    into_ramp = bad_posture_elapsed_s - config.darken_onset_s
    if into_ramp <= 0:
        return 1.0
    if into_ramp >= config.darken_ramp_s:
        return 0.0
    return 1.0 - into_ramp / config.darken_ramp_s


def _brightness_ms(bad_ms: int, config: FsmConfig) -> float:
    into = bad_ms - _ms(config.darken_onset_s)
    ramp = _ms(config.darken_ramp_s)
    if into <= 0:
        return 1.0
    if into >= ramp:
        return 0.0
    return 1.0 - into / ramp


@dataclass(frozen=True)
class PostureState:
    mode: Mode = Mode.UPRIGHT
    bad_ms: int = 0
    good_ms: int = 0
    brightness: float = 1.0
    last_motion_t: int | None = None
    last_t: int | None = None
    # classification of the previous tick: "good", "bad", "suppressed" or None
    prev_class: str | None = None
    in_episode: bool = False
    notified: bool = False
    darkened: bool = False
    blacked_out: bool = False
    next_renotify_ms: int | None = None

    @property
    def bad_posture_elapsed_s(self) -> float:
        return self.bad_ms / 1000.0

    @property
    def good_posture_elapsed_s(self) -> float:
        return self.good_ms / 1000.0


def _escalated_mode(state: PostureState, config: FsmConfig) -> Mode:
    if state.blacked_out:
        return Mode.BLACKOUT
    if state.darkened:
        return Mode.DARKENING
    if state.notified:
        return Mode.NOTIFIED
    return Mode.DEVIATED if state.in_episode else Mode.UPRIGHT


def tick(state: PostureState, reading: TiltReading, config: FsmConfig) -> tuple[PostureState, list[FeedbackEvent]]:
    """Advance the automaton by one reading. Pure: state and config are not mutated."""
    t = reading.t_ms
    if state.last_t is not None and t < state.last_t:
        raise NonMonotonicTime(f"reading at {t} ms precedes previous tick at {state.last_t} ms")
    dt = 0 if state.last_t is None else t - state.last_t
    events: list[FeedbackEvent] = []

    last_motion = t if reading.in_motion else state.last_motion_t
    suppressed = last_motion is not None and (t - last_motion) < _ms(config.motion_holdoff_s)

    if suppressed:
        if state.mode is not Mode.SUPPRESSED:
            events.append(FeedbackEvent(t, EventKind.SUPPRESS_START))
        new = replace(state, mode=Mode.SUPPRESSED, brightness=1.0, last_motion_t=last_motion,
                      last_t=t, prev_class="suppressed")
        return new, events

    if state.mode is Mode.SUPPRESSED:
        events.append(FeedbackEvent(t, EventKind.SUPPRESS_END))

    if reading.tilt_deg <= config.threshold_deg:
        good_ms = state.good_ms + dt if state.prev_class == "good" else 0
        s = replace(state, good_ms=good_ms, last_motion_t=last_motion, last_t=t, prev_class="good")
        if s.in_episode and good_ms >= _ms(config.recover_debounce_s):
            if s.brightness < 1.0:
                events.append(FeedbackEvent(t, EventKind.RESTORE))
            s = replace(s, mode=Mode.UPRIGHT, bad_ms=0, brightness=1.0, in_episode=False, notified=False,
                        darkened=False, blacked_out=False, next_renotify_ms=None)
        elif s.in_episode:
            # short dip below threshold: hold the current escalation stage and level
            s = replace(s, mode=_escalated_mode(s, config), brightness=_brightness_ms(s.bad_ms, config))
        else:
            s = replace(s, mode=Mode.UPRIGHT, bad_ms=0, brightness=1.0)
        return s, events

    if state.in_episode:
        bad_ms = state.bad_ms + dt if state.prev_class == "bad" else state.bad_ms
    else:
        bad_ms = 0
    s = replace(state, bad_ms=bad_ms, good_ms=0, last_motion_t=last_motion, last_t=t,
                prev_class="bad", in_episode=True)

    grace = _ms(config.grace_to_notify_s)
    onset = _ms(config.darken_onset_s)
    if not s.notified and bad_ms >= grace:
        events.append(FeedbackEvent(t, EventKind.NOTIFY_VIBRATE))
        nxt = grace + _ms(config.repeat_notify_s) if config.repeat_notify_s else None
        s = replace(s, notified=True, next_renotify_ms=nxt)
    elif s.next_renotify_ms is not None and bad_ms >= s.next_renotify_ms:
        events.append(FeedbackEvent(t, EventKind.NOTIFY_VIBRATE))
        period = _ms(config.repeat_notify_s)
        nxt = s.next_renotify_ms
        while nxt <= bad_ms:
            nxt += period
        s = replace(s, next_renotify_ms=nxt)
    if not s.darkened and bad_ms >= onset:
        events.append(FeedbackEvent(t, EventKind.DARKEN_START))
        s = replace(s, darkened=True)
    level = _brightness_ms(bad_ms, config)
    if not s.blacked_out and s.darkened and level == 0.0:
        events.append(FeedbackEvent(t, EventKind.BLACKOUT))
        s = replace(s, blacked_out=True)
    s = replace(s, brightness=level)
    return replace(s, mode=_escalated_mode(s, config)), events


def run(readings: Iterable[TiltReading], config: FsmConfig, state: PostureState | None = None):
    """Feed a whole stream; returns (final state, events, per-tick states)."""
    state = state or PostureState()
    events: list[FeedbackEvent] = []
    trace: list[PostureState] = []
    for r in readings:
        state, ev = tick(state, r, config)
        events.extend(ev)
        trace.append(state)
    return state, events, trace
