"""Run configuration: built-in defaults < JSON config file < command-line flags."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .errors import ValidationError
from .fsm import FsmConfig
from .imu import DEFAULT_EMA_ALPHA, SAMPLE_HZ, MotionParams
from .stats import TVariant

_MOTION_KEYS = {"jerk_thresh_milli_g": "jerk_thresh_milli_g", "motion_window": "window",
                "frac_required": "frac_required"}
_FSM_KEYS = {f.name for f in fields(FsmConfig)}
_TOP_KEYS = {"ema_alpha", "sample_hz", "data_dir", "brightness_cmd", "notify_cmd", "t_variant"}


@dataclass
class RunConfig:
    fsm: FsmConfig = field(default_factory=FsmConfig)
    motion: MotionParams = field(default_factory=MotionParams)
    ema_alpha: float = DEFAULT_EMA_ALPHA
    sample_hz: float = SAMPLE_HZ
    data_dir: str = "data"
    brightness_cmd: str | None = None
    notify_cmd: str | None = None
    t_variant: TVariant = TVariant.WELCH

    def __post_init__(self):
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValidationError(f"ema_alpha must be in (0, 1], got {self.ema_alpha}")
        if not self.sample_hz > 0:
            raise ValidationError("sample_hz must be > 0")
        self.t_variant = TVariant(str(self.t_variant).upper() if not isinstance(self.t_variant, TVariant)
                                  else self.t_variant)

    def merged(self, overrides: dict) -> "RunConfig":
        """New config with flat ``overrides`` applied; keys with value None are ignored."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(overrides) - _FSM_KEYS - set(_MOTION_KEYS) - _TOP_KEYS
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        fsm = self.fsm.to_dict()
        fsm.update({k: v for k, v in overrides.items() if k in _FSM_KEYS})
        motion = {"jerk_thresh_milli_g": self.motion.jerk_thresh_milli_g, "window": self.motion.window,
                  "frac_required": self.motion.frac_required}
        motion.update({_MOTION_KEYS[k]: v for k, v in overrides.items() if k in _MOTION_KEYS})
        top = {k: getattr(self, k) for k in _TOP_KEYS}
        top.update({k: v for k, v in overrides.items() if k in _TOP_KEYS})
        try:
            return RunConfig(fsm=FsmConfig(**fsm), motion=MotionParams(**motion), **top)
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc


def load_config(path: str | None, flags: dict | None = None, base: dict | None = None) -> RunConfig:
    """``base`` sits between the built-in defaults and the file (used for a profile's threshold)."""
    cfg = RunConfig()
    if base:
        cfg = cfg.merged(base)
    if path:
        try:
            with open(path, encoding="utf-8") as f:
                file_values = json.load(f)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ValidationError("config file must hold a JSON object")
        cfg = cfg.merged(file_values)
    if flags:
        cfg = cfg.merged(flags)
    return cfg
