"""Collar-clip posture monitoring: tilt sensing, radio frames, escalating
screen feedback, session logs and the study's statistics."""

from .fsm import EventKind, FeedbackEvent, FsmConfig, Mode, PostureState, brightness_at, tick
from .imu import CalibrationProfile, ImuSample, TiltReading, calibrate, compute_tilt, detect_motion
from .protocol import Packet, decode_packet, encode_packet, gap_count

__version__ = "0.1.0"

__all__ = [
    "CalibrationProfile",
    "EventKind",
    "FeedbackEvent",
    "FsmConfig",
    "ImuSample",
    "Mode",
    "Packet",
    "PostureState",
    "TiltReading",
    "brightness_at",
    "calibrate",
    "compute_tilt",
    "decode_packet",
    "detect_motion",
    "encode_packet",
    "gap_count",
    "tick",
]
