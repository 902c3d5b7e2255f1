"""Wire protocol, UDP transport, CSV replay and stream alignment."""

from .align import AddressStats, AlignPolicy, AlignResult, align, infer_dt, reorder
from .protocol import (
    PACKET_SIZE,
    CorruptPacketError,
    ForeignPacketError,
    PacketError,
    TruncatedPacketError,
    WatermarkPacket,
    decode,
    encode,
)
from .replay import (
    ReplayDataError,
    ReplayError,
    ReplayParseError,
    load_replay,
    read_observations,
    read_packets,
    write_observations,
    write_packets,
)
from .types import AlignedSample, Observation, ReceivedPacket

__all__ = [
    "AddressStats",
    "AlignPolicy",
    "AlignResult",
    "AlignedSample",
    "CorruptPacketError",
    "ForeignPacketError",
    "Observation",
    "PACKET_SIZE",
    "PacketError",
    "ReceivedPacket",
    "ReplayDataError",
    "ReplayError",
    "ReplayParseError",
    "TruncatedPacketError",
    "WatermarkPacket",
    "align",
    "decode",
    "encode",
    "infer_dt",
    "load_replay",
    "read_observations",
    "read_packets",
    "reorder",
    "write_observations",
    "write_packets",
]
