"""Display sinks: where brightness levels and nudges end up."""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
from dataclasses import dataclass

from .errors import SinkUnavailable

log = logging.getLogger(__name__)

COMMAND_TIMEOUT_S = 1.0


@dataclass(frozen=True)
class BrightnessCommand:
    t_ms: int
    level: float

    def __post_init__(self):
        object.__setattr__(self, "level", min(1.0, max(0.0, float(self.level))))

    @property
    def level_pct(self) -> int:
        return round(self.level * 100)


class DisplaySink:
    """Base sink. Clamps, drops repeats of the last level, and never raises."""

    def __init__(self):
        self._last_level: float | None = None
        self.failures = 0

    def apply(self, cmd: BrightnessCommand) -> bool:
        """Returns True if the level was dispatched or was already current."""
        if cmd.level == self._last_level:
            return True
        try:
            self._set_level(cmd)
        except SinkUnavailable as exc:
            self.failures += 1
            self._last_level = None
            log.error("brightness sink unavailable: %s", exc)
            return False
        self._last_level = cmd.level
        return True

    def notify(self, t_ms: int, message: str) -> bool:
        try:
            self._notify(t_ms, message)
        except SinkUnavailable as exc:
            self.failures += 1
            log.error("notification sink unavailable: %s", exc)
            return False
        return True

    def _set_level(self, cmd: BrightnessCommand) -> None:
        raise NotImplementedError

    def _notify(self, t_ms: int, message: str) -> None:
        pass

    def close(self) -> None:
        pass


class SimulatedSink(DisplaySink):
    def __init__(self):
        super().__init__()
        self.records: list[tuple[int, float]] = []
        self.notifications: list[tuple[int, str]] = []

    def _set_level(self, cmd):
        self.records.append((cmd.t_ms, cmd.level))

    def _notify(self, t_ms, message):
        self.notifications.append((t_ms, message))

    @property
    def levels(self) -> list[float]:
        return [lvl for _, lvl in self.records]

    def dump_jsonl(self, fh) -> None:
        for t_ms, level in self.records:
            fh.write(json.dumps({"t_ms": t_ms, "level": level}, sort_keys=True) + "\n")


class CommandSink(DisplaySink):
    """Runs user-supplied command templates.

    ``brightness_cmd`` gets ``{level_pct}`` (0-100) substituted, ``notify_cmd``
    gets ``{message}``. Either may be None to disable that channel.
    """

    def __init__(self, brightness_cmd: str | None, notify_cmd: str | None = None,
                 timeout_s: float = COMMAND_TIMEOUT_S):
        super().__init__()
        self.brightness_cmd = brightness_cmd
        self.notify_cmd = notify_cmd
        self.timeout_s = timeout_s

    def _run(self, argv: list[str]) -> None:
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=self.timeout_s, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SinkUnavailable(f"{argv[0]}: {exc}") from exc
        if proc.returncode != 0:
            raise SinkUnavailable(f"{argv[0]} exited with status {proc.returncode}")

    def _set_level(self, cmd):
        if self.brightness_cmd:
            self._run([part.format(level_pct=cmd.level_pct) for part in shlex.split(self.brightness_cmd)])

    def _notify(self, t_ms, message):
        if self.notify_cmd:
            argv = [part.format(message=message) for part in shlex.split(self.notify_cmd)]
            self._run(argv)
