"""Receiver pipeline: readings -> FSM -> display sink -> session log."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .fsm import EventKind, FeedbackEvent, FsmConfig, PostureState, tick
from .imu import (
    DEFAULT_EMA_ALPHA,
    SAMPLE_HZ,
    CalibrationProfile,
    ImuSample,
    MotionParams,
    TiltEstimator,
    TiltReading,
)
from .protocol import Packet, angles_to_direction, gap_count
from .screen import BrightnessCommand, DisplaySink
from .store import SampleRecord, SessionWriter

NOTIFY_MESSAGE = "Sit up straight: posture has been off for a while"


def readings_from_samples(samples: Iterable[ImuSample], profile: CalibrationProfile,
                          ema_alpha: float = DEFAULT_EMA_ALPHA,
                          motion: MotionParams | None = None) -> Iterator[TiltReading]:
    est = TiltEstimator(profile, ema_alpha, motion or MotionParams())
    for s in samples:
        yield est.update(s)


def packets_to_samples(packets: Iterable[Packet], sample_hz: float = SAMPLE_HZ,
                       ) -> Iterator[tuple[ImuSample, float | None]]:
    """Rebuild 1 g samples along each frame's direction, timed from the unwrapped sequence number.

    Yields ``(sample, jerk)``; jerk is None for the first frame.
    """
    index = None
    prev_seq = None
    for p in packets:
        if prev_seq is None:
            index = 0
        elif p.seq == prev_seq:
            continue  # duplicate delivery
        else:
            index += gap_count(prev_seq, p.seq) + 1
        ux, uy, uz = angles_to_direction(p.pitch_cdeg, p.roll_cdeg)
        sample = ImuSample(round(index * 1000 / sample_hz), 1000.0 * ux, 1000.0 * uy, 1000.0 * uz)
        yield sample, (None if prev_seq is None else float(p.jerk_milli_g))
        prev_seq = p.seq


def readings_from_packets(packets: Iterable[Packet], profile: CalibrationProfile,
                          ema_alpha: float = DEFAULT_EMA_ALPHA, motion: MotionParams | None = None,
                          sample_hz: float = SAMPLE_HZ) -> Iterator[TiltReading]:
    """The receiver ignores the transmitter's motion flag and gates on the forwarded jerk itself."""
    est = TiltEstimator(profile, ema_alpha, motion or MotionParams())
    for sample, j in packets_to_samples(packets, sample_hz):
        yield est.update_direction(sample, j)


@dataclass
class PipelineResult:
    state: PostureState
    events: list[FeedbackEvent] = field(default_factory=list)
    # (t_ms, tilt_deg, brightness, in_motion) for every tick, kept only when requested
    trace: list[tuple[int, float, float, bool]] = field(default_factory=list)
    samples_logged: int = 0


class Pipeline:
    """Drives the FSM one reading at a time; shared by replay and monitor."""

    def __init__(self, config: FsmConfig, sink: DisplaySink | None = None,
                 writer: SessionWriter | None = None, log_period_ms: int = 1000, keep_trace: bool = False):
        self.config = config
        self.sink = sink
        self.writer = writer
        self.log_period_ms = log_period_ms
        self.keep_trace = keep_trace
        self.result = PipelineResult(PostureState())
        self._next_log_bucket: int | None = None

    def feed(self, reading: TiltReading) -> list[FeedbackEvent]:
        state, events = tick(self.result.state, reading, self.config)
        self.result.state = state
        if self.sink is not None:
            self.sink.apply(BrightnessCommand(reading.t_ms, state.brightness))
            for ev in events:
                if ev.kind is EventKind.NOTIFY_VIBRATE:
                    self.sink.notify(ev.t_ms, NOTIFY_MESSAGE)
        if self.writer is not None:
            bucket = reading.t_ms // self.log_period_ms
            if self._next_log_bucket is None or bucket >= self._next_log_bucket:
                self.writer.append(SampleRecord(reading.t_ms, reading.tilt_deg, reading.in_motion, state.brightness))
                self.result.samples_logged += 1
                self._next_log_bucket = bucket + 1
            for ev in events:
                self.writer.append(ev)
        self.result.events.extend(events)
        if self.keep_trace:
            self.result.trace.append((reading.t_ms, reading.tilt_deg, state.brightness, reading.in_motion))
        return events

    def run(self, readings: Iterable[TiltReading]) -> PipelineResult:
        for r in readings:
            self.feed(r)
        return self.result
