"""Fixed 56-byte little-endian watermark packet.

Layout::

    magic "WMK1"      4
    version  u8       1
    msg_type u8       1   (0x01 = watermark sample)
    reserved u16      2
    seq      u32      4
    timestamp_us u64  8
    u_g_v    f64      8
    u_g_omega f64     8
    e_v      f64      8
    e_omega  f64      8
    crc32    u32      4   (CRC-32/ISO-HDLC over the preceding 52 bytes)
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

MAGIC = b"WMK1"
VERSION = 1
MSG_WATERMARK = 0x01
PACKET_SIZE = 56

_BODY = struct.Struct("<4sBBHIQdddd")
_CRC = struct.Struct("<I")
assert _BODY.size + _CRC.size == PACKET_SIZE

# magic fields further than this many bits from "WMK1" are treated as another protocol
_MAGIC_TOLERANCE_BITS = 2


class PacketError(ValueError):
    pass


class TruncatedPacketError(PacketError):
    pass


class ForeignPacketError(PacketError):
    pass


class CorruptPacketError(PacketError):
    pass


@dataclass(frozen=True)
class WatermarkPacket:
    seq: int
    timestamp_us: int
    u_g_v: float
    u_g_omega: float
    e_v: float
    e_omega: float
    version: int = VERSION


def encode(pkt: WatermarkPacket) -> bytes:
    if not 0 <= pkt.seq < 2**32:
        raise ValueError(f"seq out of u32 range: {pkt.seq}")
    if not 0 <= pkt.timestamp_us < 2**64:
        raise ValueError(f"timestamp out of u64 range: {pkt.timestamp_us}")
    body = _BODY.pack(
        MAGIC, pkt.version, MSG_WATERMARK, 0, pkt.seq, pkt.timestamp_us,
        pkt.u_g_v, pkt.u_g_omega, pkt.e_v, pkt.e_omega,
    )
    return body + _CRC.pack(zlib.crc32(body))


def _bit_distance(a: bytes, b: bytes) -> int:
    return sum(bin(x ^ y).count("1") for x, y in zip(a, b))


def decode(data: bytes) -> WatermarkPacket:
    """Parse and verify one packet.

    Raises :class:`ForeignPacketError` for datagrams that are not ours,
    :class:`TruncatedPacketError` for short buffers and
    :class:`CorruptPacketError` when the checksum fails. A magic field within
    two bits of ``WMK1`` is considered damaged rather than foreign, so any
    single-bit error anywhere in a packet surfaces as corruption.
    """
    data = bytes(data)
    if len(data) >= 4 and _bit_distance(data[:4], MAGIC) > _MAGIC_TOLERANCE_BITS:
        raise ForeignPacketError(f"bad magic {data[:4]!r}")
    if len(data) < PACKET_SIZE:
        raise TruncatedPacketError(f"packet is {len(data)} bytes, expected {PACKET_SIZE}")
    if len(data) > PACKET_SIZE:
        raise ForeignPacketError(f"oversized datagram of {len(data)} bytes")
    body, (crc,) = data[: _BODY.size], _CRC.unpack(data[_BODY.size:])
    if zlib.crc32(body) != crc:
        raise CorruptPacketError("crc mismatch")
    magic, version, msg_type, _reserved, seq, ts, ugv, ugw, ev, ew = _BODY.unpack(body)
    if magic != MAGIC:
        raise ForeignPacketError(f"bad magic {magic!r}")
    if version != VERSION or msg_type != MSG_WATERMARK:
        raise ForeignPacketError(f"unsupported version {version} / message type {msg_type}")
    return WatermarkPacket(seq, ts, ugv, ugw, ev, ew, version)
