import math
import struct

import pytest
from hypothesis import given, settings, strategies as st

from wmatch.net.protocol import (
    PACKET_SIZE,
    CorruptPacketError,
    ForeignPacketError,
    TruncatedPacketError,
    WatermarkPacket,
    decode,
    encode,
)
from wmatch.net.transport import UdpReceiver, UdpSender
from wmatch.net.types import ReceivedPacket

REF = WatermarkPacket(seq=1234, timestamp_us=61_700_000, u_g_v=1.0, u_g_omega=-0.25, e_v=0.31, e_omega=-0.02)


def crc32_bitwise(data: bytes) -> int:
    """Reflected CRC-32, polynomial 0xEDB88320, init and xor-out 0xFFFFFFFF."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def test_crc_oracle_check_value():
    assert crc32_bitwise(b"123456789") == 0xCBF43926


def test_encoded_length_and_trailer():
    raw = encode(REF)
    assert len(raw) == PACKET_SIZE == 56
    assert int.from_bytes(raw[52:], "little") == crc32_bitwise(raw[:52])


def test_zero_packet_layout():
    raw = encode(WatermarkPacket(0, 0, 0.0, 0.0, 0.0, 0.0))
    assert raw[:4].hex() == "574d4b31"
    assert raw[4] == 1 and raw[5] == 0x01
    assert raw[6:8] == b"\x00\x00"
    assert raw[8:12] == b"\x00\x00\x00\x00"
    assert raw[12:52] == bytes(40)


def test_field_offsets():
    raw = encode(REF)
    assert struct.unpack_from("<I", raw, 8)[0] == 1234
    assert struct.unpack_from("<Q", raw, 12)[0] == 61_700_000
    assert struct.unpack_from("<4d", raw, 20) == (1.0, -0.25, 0.31, -0.02)


def test_round_trip_reference():
    assert decode(encode(REF)) == REF


finite = st.floats(allow_nan=False)
packets = st.builds(
    WatermarkPacket,
    seq=st.integers(0, 2**32 - 1),
    timestamp_us=st.integers(0, 2**64 - 1),
    u_g_v=finite, u_g_omega=finite, e_v=finite, e_omega=finite,
)


@settings(max_examples=300)
@given(packets)
def test_round_trip_property(p):
    assert decode(encode(p)) == p


@pytest.mark.parametrize("value", [0.0, -0.0, 5e-324, -5e-324, 2.2250738585072014e-308, 1.7976931348623157e308, math.inf, -math.inf])
def test_round_trip_extremes(value):
    p = WatermarkPacket(2**32 - 1, 2**64 - 1, value, -value, value, value)
    q = decode(encode(p))
    # compare encodings so that -0.0 and 0.0 are told apart
    assert encode(q) == encode(p)
    assert math.copysign(1.0, q.u_g_v) == math.copysign(1.0, value)


def test_nan_payload_bits_survive():
    p = WatermarkPacket(1, 1, math.nan, 0.0, 0.0, 0.0)
    assert encode(decode(encode(p))) == encode(p)


def test_every_single_bit_flip_is_corruption():
    raw = bytearray(encode(REF))
    for bit in range(len(raw) * 8):
        bad = bytearray(raw)
        bad[bit // 8] ^= 1 << (bit % 8)
        with pytest.raises(CorruptPacketError):
            decode(bytes(bad))


def test_truncated():
    raw = encode(REF)
    for n in (0, 3, 4, 55):
        with pytest.raises(TruncatedPacketError):
            decode(raw[:n])


def test_foreign_magic_and_version():
    raw = bytearray(encode(REF))
    with pytest.raises(ForeignPacketError):
        decode(b"HTTP" + bytes(raw[4:]))
    with pytest.raises(ForeignPacketError):
        decode(bytes(raw) + b"\x00")
    body = bytearray(raw[:52])
    body[4] = 2
    import zlib

    with pytest.raises(ForeignPacketError):
        decode(bytes(body) + zlib.crc32(bytes(body)).to_bytes(4, "little"))


def test_errors_are_distinguishable():
    classes = {CorruptPacketError, TruncatedPacketError, ForeignPacketError}
    assert len(classes) == 3
    for a in classes:
        for b in classes - {a}:
            assert not issubclass(a, b)


def test_encode_range_checks():
    with pytest.raises(ValueError):
        encode(WatermarkPacket(2**32, 0, 0.0, 0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        encode(WatermarkPacket(0, -1, 0.0, 0.0, 0.0, 0.0))


def test_receiver_counts_by_kind():
    rx = UdpReceiver("127.0.0.1", 0)
    try:
        rx.handle(encode(REF), "a:1")
        rx.handle(encode(REF)[:20], "a:1")
        rx.handle(b"junkjunkjunk" * 5, "a:1")
        bad = bytearray(encode(REF))
        bad[30] ^= 4
        rx.handle(bytes(bad), "a:1")
        assert rx.drain() == [ReceivedPacket("a:1", REF)]
        assert dict(rx.counters) == {"received": 1, "truncated": 1, "foreign": 1, "corrupt": 1}
    finally:
        rx.close()


def test_receiver_drops_oldest_when_full():
    rx = UdpReceiver("127.0.0.1", 0, maxlen=2)
    try:
        for k in range(3):
            rx.handle(encode(WatermarkPacket(k, k, 0.0, 0.0, 0.0, 0.0)), "a:1")
        assert [rp.packet.seq for rp in rx.drain()] == [1, 2]
        assert rx.counters["overflow"] == 1
    finally:
        rx.close()


def test_udp_loopback_uses_source_address():
    import time

    with UdpReceiver("127.0.0.1", 0) as rx:
        tx = UdpSender(rx.address)
        try:
            src = tx.source_address("car")
            tx.send([ReceivedPacket("car", REF)])
            got = []
            deadline = time.monotonic() + 2.0
            while not got and time.monotonic() < deadline:
                got = rx.drain()
                time.sleep(0.01)
        finally:
            tx.close()
    assert got == [ReceivedPacket(src, REF)]
