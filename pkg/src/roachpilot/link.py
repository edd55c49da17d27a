"""Binary command/telemetry framing and a loss/latency-injectable transport.

Emulates the sub-GHz base-station/backpack link. Frame layout (big-endian):

    sync(0xA5) version(1) msg_type(1) seq(u16) payload(fixed per type) crc(u16)

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no
xorout) over version..payload. Payload layouts are fixed per message type:

    COMMAND   (0x01): channel_mask u8, amplitude_mv u16, pulse_width_ms u16,
                      duration_ms u16
    TELEMETRY (0x02): tick u32, x_mm_x100 i32, y_mm_x100 i32,
                      heading_deg_x100 i16, fwd_vel_mms_x10 i16,
                      turn_vel_dps_x10 i16, nav_state u8
    ACK       (0x03): empty
    NACK      (0x04): reason u8
"""

from __future__ import annotations

import enum
import math
import socket
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .stim import Channel, StimulusCommand, channel_mask, channels_from_mask

SYNC = 0xA5
VERSION = 1
MAX_PAYLOAD = 64
HEADER_LEN = 5  # sync, version, msg_type, seq (2 bytes)
CRC_LEN = 2

_CRC_POLY = 0x1021
_CRC_TABLE = []
for _byte in range(256):
    _crc = _byte << 8
    for _ in range(8):
        _crc = ((_crc << 1) ^ _CRC_POLY) & 0xFFFF if _crc & 0x8000 else (_crc << 1) & 0xFFFF
    _CRC_TABLE.append(_crc)


def crc16(data: bytes, crc: int = 0xFFFF) -> int:
    """CRC-16/CCITT-FALSE; check value of b"123456789" is 0x29B1."""
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


class MsgType(enum.IntEnum):
    COMMAND = 0x01
    TELEMETRY = 0x02
    ACK = 0x03
    NACK = 0x04


class FrameError(ValueError):
    """Base class for codec errors."""


class EncodeError(FrameError):
    pass


class DecodeError(FrameError):
    pass


class BadSync(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class BadLength(DecodeError):
    pass


class BadCrc(DecodeError):
    pass


class BadType(DecodeError):
    """msg_type byte outside the known set."""


class NackReason(enum.IntEnum):
    INVALID_CHANNEL_MASK = 0x01
    INVALID_PARAMETERS = 0x02
    UNSUPPORTED = 0x03


@dataclass(frozen=True)
class CommandPayload:
    channel_mask: int
    amplitude_mv: int
    pulse_width_ms: int
    duration_ms: int

    _STRUCT = struct.Struct(">BHHH")

    def pack(self) -> bytes:
        if not 0 < self.channel_mask <= 0x0F:
            raise EncodeError(f"channel_mask must be a nonzero nibble, got {self.channel_mask:#x}")
        for name in ("amplitude_mv", "pulse_width_ms", "duration_ms"):
            value = getattr(self, name)
            if not 0 <= value <= 0xFFFF:
                raise EncodeError(f"{name} out of u16 range: {value}")
        return self._STRUCT.pack(
            self.channel_mask, self.amplitude_mv, self.pulse_width_ms, self.duration_ms
        )

    @classmethod
    def unpack(cls, data: bytes) -> "CommandPayload":
        return cls(*cls._STRUCT.unpack(data))

    @classmethod
    def from_stimulus(cls, cmd: StimulusCommand) -> "CommandPayload":
        return cls(
            channel_mask=channel_mask(cmd.channels),
            amplitude_mv=round(cmd.amplitude_v * 1000),
            pulse_width_ms=round(cmd.pulse_width_ms),
            duration_ms=round(cmd.duration_ms),
        )

    def to_stimulus(self) -> StimulusCommand:
        return StimulusCommand(
            channels=channels_from_mask(self.channel_mask),
            amplitude_v=self.amplitude_mv / 1000.0,
            pulse_width_ms=float(self.pulse_width_ms),
            duration_ms=float(self.duration_ms),
        )


def normalize_heading(deg: float) -> float:
    """Wrap an angle in degrees to (-180, 180].

    In-range values pass through untouched and wrapping uses exact +/-360
    steps, so the function is exactly odd (up to the +/-180 boundary); the
    mirror-symmetry guarantees of the navigation loop rely on that.
    """
    if -180.0 < deg <= 180.0:
        return deg
    if not math.isfinite(deg):
        raise ValueError(f"cannot normalize non-finite angle {deg}")
    if abs(deg) > 1e9:  # fall back for absurd magnitudes; loop would crawl
        deg = math.fmod(deg, 360.0)
    while deg > 180.0:
        deg -= 360.0
    while deg <= -180.0:
        deg += 360.0
    return deg


@dataclass(frozen=True)
class TelemetryPayload:
    tick: int
    x_mm_x100: int
    y_mm_x100: int
    heading_deg_x100: int
    fwd_vel_mms_x10: int
    turn_vel_dps_x10: int
    nav_state: int

    _STRUCT = struct.Struct(">IiihhhB")

    def pack(self) -> bytes:
        try:
            return self._STRUCT.pack(
                self.tick,
                self.x_mm_x100,
                self.y_mm_x100,
                self.heading_deg_x100,
                self.fwd_vel_mms_x10,
                self.turn_vel_dps_x10,
                self.nav_state,
            )
        except struct.error as exc:
            raise EncodeError(str(exc)) from None

    @classmethod
    def unpack(cls, data: bytes) -> "TelemetryPayload":
        return cls(*cls._STRUCT.unpack(data))

    @classmethod
    def from_values(
        cls,
        tick: int,
        x_mm: float,
        y_mm: float,
        heading_deg: float,
        fwd_vel_mms: float,
        turn_vel_dps: float,
        nav_state: int,
    ) -> "TelemetryPayload":
        clip16 = lambda v: max(-32768, min(32767, v))
        clip32 = lambda v: max(-(1 << 31), min((1 << 31) - 1, v))
        return cls(
            tick=tick & 0xFFFFFFFF,
            x_mm_x100=clip32(round(x_mm * 100)),
            y_mm_x100=clip32(round(y_mm * 100)),
            heading_deg_x100=clip16(round(normalize_heading(heading_deg) * 100)),
            fwd_vel_mms_x10=clip16(round(fwd_vel_mms * 10)),
            turn_vel_dps_x10=clip16(round(turn_vel_dps * 10)),
            nav_state=nav_state & 0xFF,
        )

    @property
    def x_mm(self) -> float:
        return self.x_mm_x100 / 100.0

    @property
    def y_mm(self) -> float:
        return self.y_mm_x100 / 100.0

    @property
    def heading_deg(self) -> float:
        return self.heading_deg_x100 / 100.0

    @property
    def fwd_vel_mms(self) -> float:
        return self.fwd_vel_mms_x10 / 10.0

    @property
    def turn_vel_dps(self) -> float:
        return self.turn_vel_dps_x10 / 10.0


@dataclass(frozen=True)
class AckPayload:
    def pack(self) -> bytes:
        return b""

    @classmethod
    def unpack(cls, data: bytes) -> "AckPayload":
        return cls()


@dataclass(frozen=True)
class NackPayload:
    reason: int

    def pack(self) -> bytes:
        if not 0 <= self.reason <= 0xFF:
            raise EncodeError(f"nack reason out of range: {self.reason}")
        return bytes([self.reason])

    @classmethod
    def unpack(cls, data: bytes) -> "NackPayload":
        return cls(data[0])


_PAYLOAD_TYPES = {
    MsgType.COMMAND: (CommandPayload, CommandPayload._STRUCT.size),
    MsgType.TELEMETRY: (TelemetryPayload, TelemetryPayload._STRUCT.size),
    MsgType.ACK: (AckPayload, 0),
    MsgType.NACK: (NackPayload, 1),
}


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    seq: int
    payload: CommandPayload | TelemetryPayload | AckPayload | NackPayload

    @classmethod
    def command(cls, seq: int, payload: CommandPayload) -> "Frame":
        return cls(MsgType.COMMAND, seq, payload)

    @classmethod
    def telemetry(cls, seq: int, payload: TelemetryPayload) -> "Frame":
        return cls(MsgType.TELEMETRY, seq, payload)

    @classmethod
    def ack(cls, seq: int) -> "Frame":
        return cls(MsgType.ACK, seq, AckPayload())

    @classmethod
    def nack(cls, seq: int, reason: int) -> "Frame":
        return cls(MsgType.NACK, seq, NackPayload(reason))


def encode_frame(frame: Frame) -> bytes:
    cls, expected_len = _PAYLOAD_TYPES[MsgType(frame.msg_type)]
    if type(frame.payload) is not cls:
        raise EncodeError(
            f"payload {type(frame.payload).__name__} does not match {frame.msg_type.name}"
        )
    if not 0 <= frame.seq <= 0xFFFF:
        raise EncodeError(f"seq out of u16 range: {frame.seq}")
    body = frame.payload.pack()
    if len(body) != expected_len or len(body) > MAX_PAYLOAD:
        raise EncodeError(f"payload length {len(body)} invalid for {frame.msg_type.name}")
    inner = bytes([VERSION, frame.msg_type]) + struct.pack(">H", frame.seq) + body
    return bytes([SYNC]) + inner + struct.pack(">H", crc16(inner))


def decode_frame(data: bytes) -> Frame:
    """Decode one frame; raises a DecodeError subclass, never anything else."""
    if len(data) < HEADER_LEN + CRC_LEN:
        raise BadLength(f"frame too short: {len(data)} bytes")
    if data[0] != SYNC:
        raise BadSync(f"bad sync byte {data[0]:#04x}")
    if data[1] != VERSION:
        raise BadVersion(f"unsupported version {data[1]}")
    try:
        msg_type = MsgType(data[2])
    except ValueError:
        raise BadType(f"unknown msg_type {data[2]:#04x}") from None
    payload_cls, payload_len = _PAYLOAD_TYPES[msg_type]
    if len(data) != HEADER_LEN + payload_len + CRC_LEN:
        raise BadLength(
            f"{msg_type.name} frame must be {HEADER_LEN + payload_len + CRC_LEN} bytes, "
            f"got {len(data)}"
        )
    (crc_rx,) = struct.unpack(">H", data[-CRC_LEN:])
    if crc16(data[1:-CRC_LEN]) != crc_rx:
        raise BadCrc("crc mismatch")
    (seq,) = struct.unpack(">H", data[3:5])
    payload = payload_cls.unpack(data[HEADER_LEN:-CRC_LEN])
    return Frame(msg_type, seq, payload)


@dataclass(frozen=True)
class LinkModel:
    """Loss/latency model of the radio hop, applied per frame."""

    drop_probability: float = 0.0
    latency_ms: float = 0.0
    latency_jitter_ms: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must be in [0, 1]")
        if self.latency_ms < 0.0 or self.latency_jitter_ms < 0.0:
            raise ValueError("latency must be non-negative")


@dataclass(frozen=True)
class Delivery:
    delivered: bool
    latency_ms: float


def transport_send(frame: bytes, link: LinkModel, rng: np.random.Generator) -> Delivery:
    """Decide delivery and latency for one frame; pure in (rng state, link)."""
    delivered = bool(rng.random() >= link.drop_probability)
    latency = link.latency_ms
    if link.latency_jitter_ms > 0.0:
        latency += float(rng.uniform(0.0, link.latency_jitter_ms))
    return Delivery(delivered=delivered, latency_ms=latency)


class LoopbackTransport:
    """In-process transport with virtual-time delivery, one per direction."""

    def __init__(self, link: LinkModel, rng: np.random.Generator):
        self.link = link
        self.rng = rng
        self._in_flight: list[tuple[float, bytes]] = []

    def send(self, frame: bytes, now_ms: float) -> Delivery:
        d = transport_send(frame, self.link, self.rng)
        if d.delivered:
            self._in_flight.append((now_ms + d.latency_ms, frame))
        return d

    def poll(self, now_ms: float) -> list[bytes]:
        ready = [f for t, f in self._in_flight if t <= now_ms]
        self._in_flight = [(t, f) for t, f in self._in_flight if t > now_ms]
        return ready


class UdpTransport:
    """Datagram transport speaking the same byte layout, one frame per datagram."""

    def __init__(self, bind: tuple[str, int] | None = None):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        if bind is not None:
            self.sock.bind(bind)
        self.sock.setblocking(False)

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def send(self, frame: bytes, addr: tuple[str, int]) -> None:
        self.sock.sendto(frame, addr)

    def recv(self) -> tuple[bytes, tuple[str, int]] | None:
        try:
            return self.sock.recvfrom(65535)
        except BlockingIOError:
            return None

    def close(self) -> None:
        self.sock.close()


class BackpackEndpoint:
    """Agent-side frame handler: decodes commands, acks/nacks, dedupes by seq.

    Re-delivery of an already-applied seq is acknowledged again without
    reapplying the stimulus, so duplicate delivery is safe.
    """

    def __init__(self, apply_command: Callable[[StimulusCommand], NackReason | None]):
        self._apply = apply_command
        self._last_seq: int | None = None

    def handle_frame(self, data: bytes) -> bytes | None:
        try:
            frame = decode_frame(data)
        except DecodeError:
            return None  # corrupted on air: silently dropped, sender retries
        if frame.msg_type != MsgType.COMMAND:
            return None
        if frame.seq == self._last_seq:
            return encode_frame(Frame.ack(frame.seq))
        try:
            cmd = frame.payload.to_stimulus()
        except ValueError:
            return encode_frame(Frame.nack(frame.seq, NackReason.INVALID_CHANNEL_MASK))
        reason = self._apply(cmd)
        if reason is not None:
            return encode_frame(Frame.nack(frame.seq, int(reason)))
        self._last_seq = frame.seq
        return encode_frame(Frame.ack(frame.seq))
