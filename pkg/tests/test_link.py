import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roachpilot.link import (
    AckPayload,
    BackpackEndpoint,
    BadCrc,
    BadLength,
    BadSync,
    BadVersion,
    CommandPayload,
    DecodeError,
    EncodeError,
    Frame,
    LinkModel,
    LoopbackTransport,
    MsgType,
    NackPayload,
    TelemetryPayload,
    UdpTransport,
    crc16,
    decode_frame,
    encode_frame,
    normalize_heading,
    transport_send,
)
from roachpilot.stim import Channel, StimulusCommand


def crc16_oracle(data: bytes) -> int:
    """Bit-at-a-time CRC-16/CCITT-FALSE, independent of the table-driven path."""
    crc = 0xFFFF
    for b in data:
        crc ^= b << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


class TestCrc16:
    def test_check_value(self):
        assert crc16(b"123456789") == 0x29B1
        assert crc16_oracle(b"123456789") == 0x29B1

    def test_empty(self):
        assert crc16(b"") == 0xFFFF

    def test_single_zero_byte(self):
        assert crc16(b"\x00") == crc16_oracle(b"\x00") == 0xE1F0

    def test_matches_oracle_on_random_data(self):
        rng = random.Random(7)
        for _ in range(200):
            data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 64)))
            assert crc16(data) == crc16_oracle(data)


def random_frame(rng: random.Random) -> Frame:
    kind = rng.choice(list(MsgType))
    seq = rng.randrange(0x10000)
    if kind == MsgType.COMMAND:
        payload = CommandPayload(
            channel_mask=rng.randrange(1, 16),
            amplitude_mv=rng.randrange(0x10000),
            pulse_width_ms=rng.randrange(0x10000),
            duration_ms=rng.randrange(0x10000),
        )
    elif kind == MsgType.TELEMETRY:
        payload = TelemetryPayload.from_values(
            tick=rng.randrange(1 << 32),
            x_mm=rng.uniform(-20000, 20000),
            y_mm=rng.uniform(-20000, 20000),
            heading_deg=rng.uniform(-720, 720),
            fwd_vel_mms=rng.uniform(-300, 300),
            turn_vel_dps=rng.uniform(-360, 360),
            nav_state=rng.randrange(3),
        )
    elif kind == MsgType.ACK:
        payload = AckPayload()
    else:
        payload = NackPayload(rng.randrange(256))
    return Frame(kind, seq, payload)


class TestCodec:
    def test_ack_bytes_hand_assembled(self):
        encoded = encode_frame(Frame.ack(0))
        inner = bytes([0x01, 0x03, 0x00, 0x00])
        expected = bytes([0xA5]) + inner + crc16_oracle(inner).to_bytes(2, "big")
        assert encoded == expected == bytes.fromhex("a5 01 03 00 00 ab 24")

    def test_round_trip_fuzzed(self):
        rng = random.Random(123)
        for _ in range(5000):
            frame = random_frame(rng)
            assert decode_frame(encode_frame(frame)) == frame

    def test_zero_mask_rejected(self):
        bad = Frame.command(1, CommandPayload(0, 2500, 12, 400))
        with pytest.raises(EncodeError):
            encode_frame(bad)

    def test_decode_error_kinds(self):
        good = encode_frame(Frame.ack(5))
        with pytest.raises(BadCrc):
            decode_frame(good[:-1] + bytes([good[-1] ^ 0x01]))
        with pytest.raises(BadLength):
            decode_frame(good[:-1])
        with pytest.raises(BadSync):
            decode_frame(bytes([0x00]) + good[1:])
        with pytest.raises(BadVersion):
            decode_frame(bytes([good[0], 9]) + good[2:])

    def test_decoder_never_panics_on_garbage(self):
        rng = random.Random(99)
        for _ in range(3000):
            blob = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 40)))
            try:
                decode_frame(blob)
            except DecodeError:
                pass

    def test_single_bit_corruption_always_rejected(self):
        rng = random.Random(5)
        for _ in range(50):
            frame = random_frame(rng)
            encoded = encode_frame(frame)
            for byte_idx in range(len(encoded)):
                for bit in range(8):
                    corrupted = bytearray(encoded)
                    corrupted[byte_idx] ^= 1 << bit
                    with pytest.raises(DecodeError):
                        decode_frame(bytes(corrupted))

    def test_heading_normalized_after_decode(self):
        payload = TelemetryPayload.from_values(0, 0, 0, -180.0, 0, 0, 0)
        decoded = decode_frame(encode_frame(Frame.telemetry(0, payload))).payload
        assert decoded.heading_deg == 180.0
        assert -180.0 < decoded.heading_deg <= 180.0


@settings(max_examples=300, deadline=None)
@given(
    mask=st.integers(1, 15),
    amp=st.integers(0, 0xFFFF),
    width=st.integers(0, 0xFFFF),
    dur=st.integers(0, 0xFFFF),
    seq=st.integers(0, 0xFFFF),
)
def test_property_command_round_trip(mask, amp, width, dur, seq):
    frame = Frame.command(seq, CommandPayload(mask, amp, width, dur))
    assert decode_frame(encode_frame(frame)) == frame


class TestNormalizeHeading:
    def brute_force(self, deg: float) -> float:
        while deg > 180.0:
            deg -= 360.0
        while deg <= -180.0:
            deg += 360.0
        return deg

    def test_matches_brute_force(self):
        rng = random.Random(3)
        for _ in range(2000):
            deg = rng.uniform(-2000, 2000)
            assert normalize_heading(deg) == pytest.approx(self.brute_force(deg), abs=1e-9)

    def test_boundary(self):
        assert normalize_heading(180.0) == 180.0
        assert normalize_heading(-180.0) == 180.0
        assert normalize_heading(540.0) == 180.0


class TestTransport:
    def test_drop_zero_always_delivers(self):
        rng = np.random.default_rng(0)
        link = LinkModel(drop_probability=0.0)
        assert all(transport_send(b"x", link, rng).delivered for _ in range(1000))

    def test_drop_one_always_drops(self):
        rng = np.random.default_rng(0)
        link = LinkModel(drop_probability=1.0)
        assert not any(transport_send(b"x", link, rng).delivered for _ in range(1000))

    def test_drop_rate_within_binomial_3sigma(self):
        rng = np.random.default_rng(2024)
        link = LinkModel(drop_probability=0.25)
        dropped = sum(
            not transport_send(b"x", link, rng).delivered for _ in range(10_000)
        )
        assert abs(dropped - 2500) <= 150

    def test_deterministic_under_seed(self):
        link = LinkModel(drop_probability=0.5, latency_ms=1.0, latency_jitter_ms=2.0)
        a = [transport_send(b"x", link, np.random.default_rng(7)) for _ in range(1)]
        b = [transport_send(b"x", link, np.random.default_rng(7)) for _ in range(1)]
        assert a == b

    def test_loopback_latency_ordering(self):
        link = LinkModel(latency_ms=10.0)
        t = LoopbackTransport(link, np.random.default_rng(0))
        t.send(b"a", now_ms=0.0)
        assert t.poll(5.0) == []
        assert t.poll(10.0) == [b"a"]
        assert t.poll(10.0) == []

    def test_invalid_model(self):
        with pytest.raises(ValueError):
            LinkModel(drop_probability=1.5)
        with pytest.raises(ValueError):
            LinkModel(latency_ms=-1.0)


class TestUdpTransport:
    def test_frame_per_datagram_round_trip(self):
        rx = UdpTransport(bind=("127.0.0.1", 0))
        tx = UdpTransport()
        frame = encode_frame(Frame.ack(42))
        tx.send(frame, rx.address)
        for _ in range(100):
            got = rx.recv()
            if got is not None:
                break
        assert got is not None
        assert decode_frame(got[0]) == Frame.ack(42)
        rx.close()
        tx.close()


class TestBackpackEndpoint:
    def make(self):
        applied = []

        def apply(cmd: StimulusCommand):
            applied.append(cmd)
            return None

        return BackpackEndpoint(apply), applied

    def test_ack_and_apply(self):
        endpoint, applied = self.make()
        cmd = StimulusCommand(
            channels=frozenset({Channel.CERCI}),
            amplitude_v=2.5,
            pulse_width_ms=12,
            duration_ms=400,
        )
        frame = encode_frame(Frame.command(7, CommandPayload.from_stimulus(cmd)))
        reply = endpoint.handle_frame(frame)
        assert decode_frame(reply).msg_type == MsgType.ACK
        assert len(applied) == 1
        assert applied[0].channels == {Channel.CERCI}

    def test_duplicate_seq_is_idempotent(self):
        endpoint, applied = self.make()
        cmd = StimulusCommand(
            channels=frozenset({Channel.LEFT_ANTENNA}),
            amplitude_v=2.5,
            pulse_width_ms=12,
            duration_ms=400,
        )
        frame = encode_frame(Frame.command(9, CommandPayload.from_stimulus(cmd)))
        r1 = endpoint.handle_frame(frame)
        r2 = endpoint.handle_frame(frame)
        assert decode_frame(r1).msg_type == MsgType.ACK
        assert decode_frame(r2).msg_type == MsgType.ACK
        assert len(applied) == 1

    def test_corrupted_frame_silently_dropped(self):
        endpoint, applied = self.make()
        assert endpoint.handle_frame(b"\xa5garbage") is None
        assert applied == []
