"""Fixed 16-byte transmitter -> receiver frame.

Layout (little-endian)::

    off  size  field
    0    1     magic 0xA7
    1    1     version 0x01
    2    2     device_id      u16
    4    2     seq            u16, wraps
    6    2     pitch_cdeg     i16, tilt from the clip's +z axis, 0.01 deg
    8    2     roll_cdeg      i16, direction of that tilt about +z, 0.01 deg
    10   2     jerk_milli_g   u16
    12   1     flags          bit0 in_motion, bit1 low_battery, rest zero
    13   1     reserved 0x00
    14   2     CRC-16/CCITT-FALSE over bytes 0..13

A trace file is a plain concatenation of frames.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

from .errors import BadLength, BadMagic, BadVersion, ChecksumMismatch, FieldOutOfRange, FrameError

MAGIC = 0xA7
VERSION = 0x01
FRAME_LEN = 16
ANGLE_LIMIT_CDEG = 18000

FLAG_IN_MOTION = 0x01
FLAG_LOW_BATTERY = 0x02
_RESERVED_FLAGS = 0xFC

_BODY = struct.Struct("<BBHHhhHBB")
_CRC = struct.Struct("<H")


def _make_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return table


_CRC_TABLE = _make_crc_table()


def crc16_ccitt_false(data: bytes, crc: int = 0xFFFF) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor."""
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


@dataclass(frozen=True)
class Packet:
    device_id: int = 0
    seq: int = 0
    pitch_cdeg: int = 0
    roll_cdeg: int = 0
    jerk_milli_g: int = 0
    flags: int = 0

    @property
    def in_motion(self) -> bool:
        return bool(self.flags & FLAG_IN_MOTION)

    @property
    def low_battery(self) -> bool:
        return bool(self.flags & FLAG_LOW_BATTERY)

    def validate(self) -> None:
        def check(name, value, lo, hi):
            if not isinstance(value, int) or isinstance(value, bool) or not lo <= value <= hi:
                raise FieldOutOfRange(f"{name}={value!r} outside [{lo}, {hi}]")

        check("device_id", self.device_id, 0, 0xFFFF)
        check("seq", self.seq, 0, 0xFFFF)
        check("pitch_cdeg", self.pitch_cdeg, -ANGLE_LIMIT_CDEG, ANGLE_LIMIT_CDEG)
        check("roll_cdeg", self.roll_cdeg, -ANGLE_LIMIT_CDEG, ANGLE_LIMIT_CDEG)
        check("jerk_milli_g", self.jerk_milli_g, 0, 0xFFFF)
        check("flags", self.flags, 0, 0xFF)
        if self.flags & _RESERVED_FLAGS:
            raise FieldOutOfRange(f"reserved flag bits set: 0x{self.flags:02X}")


def encode_packet(p: Packet) -> bytes:
    p.validate()
    body = _BODY.pack(MAGIC, VERSION, p.device_id, p.seq, p.pitch_cdeg, p.roll_cdeg, p.jerk_milli_g, p.flags, 0)
    return body + _CRC.pack(crc16_ccitt_false(body))


def decode_packet(frame: bytes) -> Packet:
    if len(frame) != FRAME_LEN:
        raise BadLength(f"frame must be {FRAME_LEN} bytes, got {len(frame)}")
    magic, version, device_id, seq, pitch, roll, jerk, flags, _reserved = _BODY.unpack_from(frame)
    if magic != MAGIC:
        raise BadMagic(f"bad magic 0x{magic:02X}")
    if version != VERSION:
        raise BadVersion(f"unsupported version 0x{version:02X}")
    (crc,) = _CRC.unpack_from(frame, 14)
    expected = crc16_ccitt_false(frame[:14])
    if crc != expected:
        raise ChecksumMismatch(f"crc 0x{crc:04X} != computed 0x{expected:04X}")
    p = Packet(device_id, seq, pitch, roll, jerk, flags)
    p.validate()
    return p


def gap_count(prev_seq: int, next_seq: int) -> int:
    """Packets lost between two received sequence numbers."""
    return (next_seq - prev_seq - 1) % 65536


def direction_to_angles(u: tuple[float, float, float]) -> tuple[int, int]:
    """Unit gravity direction -> (polar angle from +z, azimuth) in centidegrees."""
    x, y, z = u
    polar = math.degrees(math.atan2(math.hypot(x, y), z))
    azimuth = math.degrees(math.atan2(y, x)) if (x or y) else 0.0
    return round(polar * 100), round(azimuth * 100)


def angles_to_direction(pitch_cdeg: int, roll_cdeg: int) -> tuple[float, float, float]:
    polar = math.radians(pitch_cdeg / 100.0)
    azimuth = math.radians(roll_cdeg / 100.0)
    s = math.sin(polar)
    return (s * math.cos(azimuth), s * math.sin(azimuth), math.cos(polar))


def write_trace(frames: Iterable[bytes], fh: BinaryIO) -> int:
    n = 0
    for frame in frames:
        fh.write(frame)
        n += 1
    return n


def iter_trace(data: bytes) -> Iterator[bytes]:
    """Split a trace into its fixed records; a trailing partial record is yielded as-is."""
    for off in range(0, len(data), FRAME_LEN):
        yield data[off : off + FRAME_LEN]


class FrameReader:
    """Incremental decoder for a live byte stream.

    Bytes are buffered until a full frame is available. A frame that fails
    to decode costs one byte of resynchronisation, so a dropped byte upstream
    only loses the frames it overlaps.
    """

    def __init__(self):
        self._buf = bytearray()
        self.errors = 0

    def feed(self, data: bytes) -> list[Packet]:
        self._buf.extend(data)
        out = []
        while len(self._buf) >= FRAME_LEN:
            if self._buf[0] != MAGIC:
                del self._buf[0]
                continue
            try:
                out.append(decode_packet(bytes(self._buf[:FRAME_LEN])))
            except FrameError:
                self.errors += 1
                del self._buf[0]
                continue
            del self._buf[:FRAME_LEN]
        return out
