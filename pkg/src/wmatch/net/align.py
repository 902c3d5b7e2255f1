"""Pairing of sensor observations with the watermark packets that produced them."""

from __future__ import annotations

import bisect
import heapq
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .types import AlignedSample, Observation, ReceivedPacket

__all__ = ["AlignPolicy", "AddressStats", "AlignResult", "reorder", "align", "infer_dt"]


@dataclass(frozen=True)
class AlignPolicy:
    """``dt`` is the control period in seconds; staleness defaults to ``3 * dt``."""

    dt: float
    staleness: Optional[float] = None
    reorder_buffer: int = 8

    @property
    def dt_us(self) -> int:
        return int(round(self.dt * 1e6))

    @property
    def staleness_us(self) -> int:
        return int(round((3 * self.dt if self.staleness is None else self.staleness) * 1e6))


@dataclass
class AddressStats:
    packets: int = 0
    duplicates: int = 0
    late: int = 0
    aligned: int = 0
    dropped: int = 0
    dropped_no_packet: int = 0
    dropped_stale: int = 0
    dropped_reused: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AlignResult:
    samples: list[AlignedSample] = field(default_factory=list)
    stats: dict[str, AddressStats] = field(default_factory=dict)
    observations: int = 0


def reorder(arrivals: Iterable, bound: int = 8):
    """Restore seq order through a bounded buffer.

    ``arrivals`` is an iterable of packets in arrival order. Returns
    ``(released, duplicates, late)``; ``late`` counts packets that arrived
    after a higher seq had already been released.
    """
    heap: list = []
    seen: set[int] = set()
    released = []
    last = -1
    duplicates = late = 0
    for order, pkt in enumerate(arrivals):
        if pkt.seq in seen:
            duplicates += 1
            continue
        seen.add(pkt.seq)
        if pkt.seq <= last:
            late += 1
            continue
        heapq.heappush(heap, (pkt.seq, order, pkt))
        if len(heap) > bound:
            seq, _, out = heapq.heappop(heap)
            released.append(out)
            last = seq
    while heap:
        released.append(heapq.heappop(heap)[2])
    return released, duplicates, late


def align(observations: Iterable[Observation], packets: Iterable[ReceivedPacket], policy: AlignPolicy) -> AlignResult:
    """For each observation and address, pick the latest packet stamped at most ``t - dt/2``.

    Each packet feeds at most one sample per (address, visual ID); an
    observation whose eligible packet was already used, is older than the
    staleness bound, or does not exist is dropped for that address and
    counted. The result depends only on the inputs and the policy.
    """
    by_address: dict[str, list] = defaultdict(list)
    for rp in packets:
        by_address[rp.address].append(rp.packet)

    result = AlignResult()
    streams = {}
    for address in sorted(by_address):
        released, dup, late = reorder(by_address[address], policy.reorder_buffer)
        released.sort(key=lambda p: (p.timestamp_us, p.seq))
        streams[address] = (released, [2 * p.timestamp_us for p in released])
        result.stats[address] = AddressStats(packets=len(by_address[address]), duplicates=dup, late=late)

    dt_us, stale_us = policy.dt_us, policy.staleness_us
    used: set[tuple[str, str, int]] = set()
    obs = sorted(observations, key=lambda o: o.t_us)
    result.observations = len(obs)
    for o in obs:
        cutoff = 2 * o.t_us - dt_us
        for address, (released, keys) in streams.items():
            st = result.stats[address]
            idx = bisect.bisect_right(keys, cutoff) - 1
            if idx < 0:
                st.dropped += 1
                st.dropped_no_packet += 1
                continue
            p = released[idx]
            if o.t_us - p.timestamp_us > stale_us:
                st.dropped += 1
                st.dropped_stale += 1
                continue
            key = (address, o.visual_id, p.seq)
            if key in used:
                st.dropped += 1
                st.dropped_reused += 1
                continue
            used.add(key)
            st.aligned += 1
            result.samples.append(
                AlignedSample(address, o.visual_id, p.seq + 1, o.t_us, o.v, o.omega,
                              p.u_g_v, p.u_g_omega, p.e_v, p.e_omega)
            )
    return result


def infer_dt(packets: Iterable[ReceivedPacket]) -> Optional[float]:
    """Median per-tick spacing of packet timestamps, in seconds."""
    by_address: dict[str, list] = defaultdict(list)
    for rp in packets:
        by_address[rp.address].append(rp.packet)
    steps = []
    for pkts in by_address.values():
        pkts = sorted(pkts, key=lambda p: p.seq)
        for a, b in zip(pkts, pkts[1:]):
            if b.seq > a.seq and b.timestamp_us > a.timestamp_us:
                steps.append((b.timestamp_us - a.timestamp_us) / (b.seq - a.seq))
    if not steps:
        return None
    return statistics.median(steps) / 1e6
