"""CSV carriers for observation and packet streams."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

from .protocol import WatermarkPacket
from .types import Observation, ReceivedPacket

OBS_HEADER = ["t_s", "visual_id", "x_m", "y_m", "theta_rad", "v_mps", "omega_radps"]
PKT_HEADER = ["t_s", "address", "seq", "u_g_v", "u_g_omega", "e_v", "e_omega"]


class ReplayError(ValueError):
    pass


class ReplayParseError(ReplayError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class ReplayDataError(ReplayError):
    pass


def _fmt(x: float) -> str:
    # repr round-trips every finite double exactly
    return repr(float(x))


def _t_s(t_us: int) -> str:
    return _fmt(t_us / 1e6)


def _parse_t(text: str) -> int:
    return int(round(float(text) * 1e6))


def write_observations(path, observations: Iterable[Observation]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_HEADER)
        for o in observations:
            w.writerow([_t_s(o.t_us), o.visual_id, _fmt(o.x), _fmt(o.y), _fmt(o.theta), _fmt(o.v), _fmt(o.omega)])


def write_packets(path, packets: Iterable[ReceivedPacket]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PKT_HEADER)
        for rp in packets:
            p = rp.packet
            w.writerow([_t_s(p.timestamp_us), rp.address, p.seq, _fmt(p.u_g_v), _fmt(p.u_g_omega), _fmt(p.e_v), _fmt(p.e_omega)])


def _rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if [c.strip() for c in first] != header:
            raise ReplayParseError(path, 1, f"expected header {','.join(header)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ReplayParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def parse_observation_row(row: list[str]) -> Observation:
    t, vid, x, y, th, v, w = row
    if not vid:
        raise ValueError("empty visual_id")
    return Observation(_parse_t(t), vid, float(x), float(y), float(th), float(v), float(w))


def parse_packet_row(row: list[str]) -> ReceivedPacket:
    t, addr, seq, ugv, ugw, ev, ew = row
    if not addr:
        raise ValueError("empty address")
    return ReceivedPacket(addr, WatermarkPacket(int(seq), _parse_t(t), float(ugv), float(ugw), float(ev), float(ew)))


def read_observations(path) -> list[Observation]:
    out: list[Observation] = []
    for line, row in _rows(path, OBS_HEADER):
        try:
            o = parse_observation_row(row)
        except ValueError as exc:
            raise ReplayParseError(path, line, str(exc)) from None
        if out and o.t_us < out[-1].t_us:
            raise ReplayDataError(f"{path}:{line}: timestamp goes backwards")
        out.append(o)
    return out


def read_packets(path) -> list[ReceivedPacket]:
    out: list[ReceivedPacket] = []
    last: dict[str, int] = {}
    for line, row in _rows(path, PKT_HEADER):
        try:
            rp = parse_packet_row(row)
        except ValueError as exc:
            raise ReplayParseError(path, line, str(exc)) from None
        prev = last.get(rp.address)
        if prev is not None and rp.packet.timestamp_us < prev:
            raise ReplayDataError(f"{path}:{line}: timestamp goes backwards for {rp.address}")
        last[rp.address] = rp.packet.timestamp_us
        out.append(rp)
    return out


def load_replay(observations_csv, packets_csv) -> tuple[list[Observation], list[ReceivedPacket]]:
    return read_observations(Path(observations_csv)), read_packets(Path(packets_csv))
