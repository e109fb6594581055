"""Exception hierarchy shared by all postureclip modules."""

from __future__ import annotations


class PostureClipError(Exception):
    """Base class. ``exit_code`` is what the CLI returns when this escapes."""

    exit_code = 1


class ValidationError(PostureClipError, ValueError):
    exit_code = 2


class CorruptInputError(PostureClipError):
    exit_code = 3


# imu_core
class EmptyCalibration(ValidationError):
    pass


class MotionDuringCalibration(ValidationError):
    pass


class ZeroVector(PostureClipError, ValueError):
    pass


class WindowTooShort(ValidationError):
    pass


# wire_protocol
class FrameError(PostureClipError, ValueError):
    pass


class BadLength(FrameError):
    pass


class BadMagic(FrameError):
    pass


class BadVersion(FrameError):
    pass


class ChecksumMismatch(FrameError):
    pass


class FieldOutOfRange(FrameError):
    pass


# feedback_fsm
class NonMonotonicTime(PostureClipError, ValueError):
    pass


# screen_control
class SinkUnavailable(PostureClipError):
    pass


# session_store
class OutOfOrderTimestamp(PostureClipError, ValueError):
    pass


class UnknownSession(PostureClipError, KeyError):
    pass


class EmptySession(PostureClipError, ValueError):
    pass


# simulator
class InvalidSpec(ValidationError):
    pass


# stats
class StatsError(PostureClipError, ValueError):
    pass


class LengthMismatch(StatsError):
    pass


class ZeroVariance(StatsError):
    pass


class ZeroMarginal(StatsError):
    pass


class TooFewSamples(StatsError):
    pass


class DomainError(StatsError):
    pass


# cohort_analysis
class CohortError(PostureClipError, ValueError):
    exit_code = 2


class MissingColumn(CohortError):
    pass


class DuplicateParticipantPhase(CohortError):
    def __init__(self, participant_id: str, phase: str, line: int | None = None):
        self.participant_id = participant_id
        self.phase = phase
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate row for participant {participant_id} phase {phase}{where}")


class UnpairedParticipant(CohortError):
    pass


class GroupTooSmall(CohortError):
    pass
