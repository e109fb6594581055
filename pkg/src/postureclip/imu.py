"""Accelerometer tilt sensing: calibration, smoothed tilt deviation, motion gate.

Accelerations are in milli-g (1000 = 1 g). Tilt is the angle between the
current smoothed gravity direction and the upright reference captured at
calibration time, so it does not depend on how the clip sits on the collar.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .errors import EmptyCalibration, MotionDuringCalibration, ValidationError, WindowTooShort, ZeroVector

Vec3 = tuple[float, float, float]

SAMPLE_HZ = 10
DEFAULT_THRESHOLD_DEG = 15.0
DEFAULT_EMA_ALPHA = 0.2
DEFAULT_JERK_THRESH = 150.0
DEFAULT_MOTION_WINDOW = 20
DEFAULT_FRAC_REQUIRED = 0.3
STILL_BAND = (800.0, 1200.0)
MAX_MAGNITUDE = 16000.0


def norm(v: Sequence[float]) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def normalize(v: Sequence[float]) -> Vec3:
    n = norm(v)
    if n == 0.0:
        raise ZeroVector("zero-length acceleration vector (sensor fault?)")
    return (v[0] / n, v[1] / n, v[2] / n)


def dot(u: Sequence[float], v: Sequence[float]) -> float:
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def angle_deg(u: Sequence[float], v: Sequence[float]) -> float:
    """Angle between two vectors in degrees.

    Uses atan2(|u x v|, u . v), which agrees with arccos of the clamped
    cosine but keeps full precision near 0 and 180 degrees.
    """
    cx = u[1] * v[2] - u[2] * v[1]
    cy = u[2] * v[0] - u[0] * v[2]
    cz = u[0] * v[1] - u[1] * v[0]
    return math.degrees(math.atan2(math.sqrt(cx * cx + cy * cy + cz * cz), dot(u, v)))


@dataclass(frozen=True)
class ImuSample:
    t_ms: int
    ax: float
    ay: float
    az: float

    def __post_init__(self):
        if self.t_ms < 0:
            raise ValidationError(f"negative timestamp {self.t_ms}")
        if self.magnitude > MAX_MAGNITUDE:
            raise ValidationError(f"acceleration magnitude {self.magnitude:.0f} milli-g beyond sensor range")

    @property
    def vector(self) -> Vec3:
        return (self.ax, self.ay, self.az)

    @property
    def magnitude(self) -> float:
        return norm(self.vector)


@dataclass(frozen=True)
class TiltReading:
    t_ms: int
    tilt_deg: float
    jerk_milli_g: float = 0.0
    in_motion: bool = False


@dataclass(frozen=True)
class CalibrationProfile:
    ref_unit_vector: Vec3
    threshold_deg: float = DEFAULT_THRESHOLD_DEG
    created_at: str = ""
    sample_count: int = 1

    def __post_init__(self):
        if abs(norm(self.ref_unit_vector) - 1.0) > 1e-9:
            raise ValidationError("ref_unit_vector must have unit norm")
        if not 0.0 < self.threshold_deg < 90.0:
            raise ValidationError(f"threshold_deg must be in (0, 90), got {self.threshold_deg}")
        if self.sample_count < 1:
            raise ValidationError("sample_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "ref_unit_vector": list(self.ref_unit_vector),
            "threshold_deg": self.threshold_deg,
            "created_at": self.created_at,
            "sample_count": self.sample_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationProfile":
        x, y, z = (float(c) for c in d["ref_unit_vector"])
        return cls((x, y, z), float(d["threshold_deg"]), str(d.get("created_at", "")), int(d["sample_count"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "CalibrationProfile":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


UPRIGHT_PROFILE = CalibrationProfile((0.0, 0.0, 1.0), DEFAULT_THRESHOLD_DEG, "", 1)


def _rfc3339_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def calibrate(
    samples: Sequence[ImuSample],
    threshold_deg: float = DEFAULT_THRESHOLD_DEG,
    created_at: str | None = None,
) -> CalibrationProfile:
    """Average samples taken while the wearer sits upright into a reference direction."""
    if not samples:
        raise EmptyCalibration("no samples supplied for calibration")
    lo, hi = STILL_BAND
    for s in samples:
        m = s.magnitude
        if not lo <= m <= hi:
            raise MotionDuringCalibration(
                f"sample at t={s.t_ms} ms has magnitude {m:.0f} milli-g outside [{lo:.0f}, {hi:.0f}]; "
                "hold still while calibrating"
            )
    n = len(samples)
    mean = (
        math.fsum(s.ax for s in samples) / n,
        math.fsum(s.ay for s in samples) / n,
        math.fsum(s.az for s in samples) / n,
    )
    return CalibrationProfile(
        normalize(mean),
        threshold_deg,
        created_at if created_at is not None else _rfc3339_now(),
        n,
    )


def compute_tilt(
    sample: ImuSample,
    prev_smoothed: Vec3 | None,
    profile: CalibrationProfile,
    ema_alpha: float = DEFAULT_EMA_ALPHA,
) -> tuple[TiltReading, Vec3]:
    """One smoothing step. Returns a reading without motion fields and the new smoothed direction."""
    if not 0.0 < ema_alpha <= 1.0:
        raise ValidationError(f"ema_alpha must be in (0, 1], got {ema_alpha}")
    u = normalize(sample.vector)
    if prev_smoothed is None or ema_alpha == 1.0:
        smoothed = u
    else:
        b = 1.0 - ema_alpha
        smoothed = normalize(
            (
                ema_alpha * u[0] + b * prev_smoothed[0],
                ema_alpha * u[1] + b * prev_smoothed[1],
                ema_alpha * u[2] + b * prev_smoothed[2],
            )
        )
    return TiltReading(sample.t_ms, angle_deg(smoothed, profile.ref_unit_vector)), smoothed


def jerk(prev: ImuSample, cur: ImuSample) -> float:
    return norm((cur.ax - prev.ax, cur.ay - prev.ay, cur.az - prev.az))


def motion_from_jerks(jerks: Iterable[float], jerk_thresh_milli_g: float, frac_required: float) -> bool:
    jerks = list(jerks)
    if not jerks:
        return False
    above = sum(1 for j in jerks if j > jerk_thresh_milli_g)
    return above >= frac_required * len(jerks)


def detect_motion(
    window: Sequence[ImuSample],
    jerk_thresh_milli_g: float = DEFAULT_JERK_THRESH,
    frac_required: float = DEFAULT_FRAC_REQUIRED,
) -> bool:
    """True when enough consecutive-sample differences exceed the jerk threshold."""
    if len(window) < 2:
        raise WindowTooShort(f"motion window needs at least 2 samples, got {len(window)}")
    if not 0.0 < frac_required <= 1.0:
        raise ValidationError(f"frac_required must be in (0, 1], got {frac_required}")
    return motion_from_jerks(
        (jerk(a, b) for a, b in zip(window, window[1:])), jerk_thresh_milli_g, frac_required
    )


@dataclass
class MotionParams:
    jerk_thresh_milli_g: float = DEFAULT_JERK_THRESH
    window: int = DEFAULT_MOTION_WINDOW
    frac_required: float = DEFAULT_FRAC_REQUIRED

    def __post_init__(self):
        if self.window < 2:
            raise WindowTooShort("motion window must be at least 2 samples")
        if not 0.0 < self.frac_required <= 1.0:
            raise ValidationError("frac_required must be in (0, 1]")


class MotionGate:
    """Sliding motion verdict over the last ``window`` samples' jerk values.

    Fed jerk magnitudes rather than samples so the receiver can run it on
    the jerk field forwarded in radio frames.
    """

    def __init__(self, params: MotionParams | None = None):
        self.params = params or MotionParams()
        self._jerks: deque[float] = deque(maxlen=self.params.window - 1)

    def push(self, jerk_milli_g: float | None) -> bool:
        # None marks the first sample of a stream, which has no difference yet.
        if jerk_milli_g is not None:
            self._jerks.append(jerk_milli_g)
        return motion_from_jerks(self._jerks, self.params.jerk_thresh_milli_g, self.params.frac_required)


@dataclass
class TiltEstimator:
    """Stateful wrapper turning an ImuSample stream into full TiltReadings."""

    profile: CalibrationProfile
    ema_alpha: float = DEFAULT_EMA_ALPHA
    motion: MotionParams = field(default_factory=MotionParams)
    _smoothed: Vec3 | None = field(default=None, init=False, repr=False)
    _prev: ImuSample | None = field(default=None, init=False, repr=False)
    _gate: MotionGate | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self._gate = MotionGate(self.motion)

    def update(self, sample: ImuSample) -> TiltReading:
        if self._prev is not None and sample.t_ms <= self._prev.t_ms:
            raise ValidationError(f"timestamps must be strictly increasing ({self._prev.t_ms} -> {sample.t_ms})")
        j = None if self._prev is None else jerk(self._prev, sample)
        return self.update_direction(sample, j)

    def update_direction(self, sample: ImuSample, jerk_milli_g: float | None) -> TiltReading:
        """Advance with a sample whose jerk was computed elsewhere (e.g. by the transmitter)."""
        partial, self._smoothed = compute_tilt(sample, self._smoothed, self.profile, self.ema_alpha)
        in_motion = self._gate.push(jerk_milli_g)
        self._prev = sample
        return TiltReading(partial.t_ms, partial.tilt_deg, jerk_milli_g or 0.0, in_motion)
