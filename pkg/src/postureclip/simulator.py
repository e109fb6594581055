"""Deterministic IMU streams from declarative posture scenarios."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import InvalidSpec
from .imu import SAMPLE_HZ, ImuSample, MotionGate, jerk as jerk_between, normalize
from .protocol import FLAG_IN_MOTION, Packet, direction_to_angles, encode_packet
from .rng import Pcg32

GRAVITY_MILLI_G = 1000.0
WALK_AMPLITUDE = 300.0
WALK_HZ = 2.0
JERK_SPIKE = 500.0
JERK_PERIOD_S = 0.5


class SegmentKind(str, Enum):
    UPRIGHT = "UPRIGHT"
    SLOUCH = "SLOUCH"
    WALK = "WALK"
    JERK = "JERK"


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    duration_s: float
    tilt_deg: float = 0.0
    noise_milli_g: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SegmentKind(self.kind))
        if not self.duration_s > 0:
            raise InvalidSpec(f"segment duration must be > 0, got {self.duration_s}")
        if self.noise_milli_g < 0:
            raise InvalidSpec("noise_milli_g must be >= 0")
        if self.kind is SegmentKind.SLOUCH:
            if not 0.0 < self.tilt_deg < 90.0:
                raise InvalidSpec(f"SLOUCH tilt_deg must be in (0, 90), got {self.tilt_deg}")
        elif self.kind is SegmentKind.UPRIGHT:
            if self.tilt_deg != 0.0:
                raise InvalidSpec("UPRIGHT segments have no tilt")
        elif not 0.0 <= self.tilt_deg < 90.0:
            # WALK/JERK may carry the posture they are overlaid on
            raise InvalidSpec(f"tilt_deg must be in [0, 90), got {self.tilt_deg}")


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        if not self.segments:
            raise InvalidSpec("scenario has no segments")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration_s(self) -> float:
        return sum(s.duration_s for s in self.segments)

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "ScenarioSpec":
        try:
            segs = tuple(Segment(**s) for s in d["segments"])
            return cls(int(d.get("seed", 0) if seed is None else seed), segs)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(f"bad scenario: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "segments": [
                {"kind": s.kind.value, "duration_s": s.duration_s, "tilt_deg": s.tilt_deg,
                 "noise_milli_g": s.noise_milli_g}
                for s in self.segments
            ],
        }

    @classmethod
    def load(cls, path, seed: int | None = None) -> "ScenarioSpec":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f), seed)


def _scenario(*segs, seed=42) -> ScenarioSpec:
    return ScenarioSpec(seed, tuple(Segment(*s) for s in segs))


BUILTIN_SCENARIOS = {
    "upright_10min": _scenario(("UPRIGHT", 600, 0, 5)),
    "slouch_5min": _scenario(("SLOUCH", 300, 40, 5)),
    "slouch_recover": _scenario(("SLOUCH", 240, 40, 5), ("UPRIGHT", 60, 0, 5)),
    "slouch_walk": _scenario(("WALK", 300, 40, 5)),
    "calibration_still": _scenario(("UPRIGHT", 10, 0, 5)),
    "calibration_walk": _scenario(("WALK", 10, 0, 5)),
    "office_day": _scenario(
        *[
            seg
            for _ in range(10)
            for seg in (("UPRIGHT", 600, 0, 5), ("SLOUCH", 420, 35, 5), ("UPRIGHT", 300, 0, 5),
                        ("WALK", 120, 0, 5), ("SLOUCH", 240, 25, 5), ("JERK", 120, 10, 5))
        ]
    ),
}


def get_scenario(name_or_path: str, seed: int | None = None) -> ScenarioSpec:
    if name_or_path in BUILTIN_SCENARIOS:
        spec = BUILTIN_SCENARIOS[name_or_path]
        return spec if seed is None else ScenarioSpec(seed, spec.segments)
    if not Path(name_or_path).is_file():
        raise InvalidSpec(f"{name_or_path!r} is neither a built-in scenario ({', '.join(BUILTIN_SCENARIOS)}) "
                          "nor a scenario file")
    return ScenarioSpec.load(name_or_path, seed)


def generate(spec: ScenarioSpec, sample_hz: float = SAMPLE_HZ) -> list[ImuSample]:
    """Materialize a scenario as accelerometer samples, ``duration * sample_hz`` of them.

    Posture tilts gravity about the x axis. WALK bounces along gravity at
    2 Hz, JERK adds a sideways spike every half second. Noise is drawn from
    PCG32 only for segments that ask for it.
    """
    if not sample_hz > 0:
        raise InvalidSpec("sample_hz must be > 0")
    rng = Pcg32(spec.seed)
    out: list[ImuSample] = []
    k = 0
    spike_every = max(1, round(JERK_PERIOD_S * sample_hz))
    for seg in spec.segments:
        theta = math.radians(seg.tilt_deg)
        gy, gz = GRAVITY_MILLI_G * math.sin(theta), GRAVITY_MILLI_G * math.cos(theta)
        uy, uz = math.sin(theta), math.cos(theta)
        n = round(seg.duration_s * sample_hz)
        for i in range(n):
            ax, ay, az = 0.0, gy, gz
            if seg.kind is SegmentKind.WALK:
                bounce = WALK_AMPLITUDE * math.sin(2.0 * math.pi * WALK_HZ * i / sample_hz)
                ay += bounce * uy
                az += bounce * uz
            elif seg.kind is SegmentKind.JERK and i % spike_every == 0:
                ax += JERK_SPIKE
            if seg.noise_milli_g > 0:
                ax += rng.gauss(0.0, seg.noise_milli_g)
                ay += rng.gauss(0.0, seg.noise_milli_g)
                az += rng.gauss(0.0, seg.noise_milli_g)
            out.append(ImuSample(round(k * 1000 / sample_hz), ax, ay, az))
            k += 1
    return out


def transmit(samples: list[ImuSample], device_id: int = 0, gate: MotionGate | None = None) -> list[Packet]:
    """Transmitter side: reduce each sample to tilt angles, jerk and a motion flag."""
    gate = gate or MotionGate()
    packets = []
    prev = None
    for k, s in enumerate(samples):
        j = None if prev is None else jerk_between(prev, s)
        pitch, roll = direction_to_angles(normalize(s.vector))
        flags = FLAG_IN_MOTION if gate.push(j) else 0
        packets.append(Packet(device_id, k & 0xFFFF, pitch, roll, min(0xFFFF, round(j or 0.0)), flags))
        prev = s
    return packets


def to_frames(samples: list[ImuSample], device_id: int = 0) -> bytes:
    return b"".join(encode_packet(p) for p in transmit(samples, device_id))


def samples_to_jsonl(samples, fh) -> None:
    for s in samples:
        fh.write(json.dumps({"t_ms": s.t_ms, "ax": s.ax, "ay": s.ay, "az": s.az}) + "\n")


def samples_from_jsonl(fh) -> list[ImuSample]:
    out = []
    for line in fh:
        if line.strip():
            d = json.loads(line)
            out.append(ImuSample(int(d["t_ms"]), float(d["ax"]), float(d["ay"]), float(d["az"])))
    return out
