"""Record types exchanged between the simulator, the transport and the aligner."""

from __future__ import annotations

from typing import NamedTuple

from .protocol import WatermarkPacket


class Observation(NamedTuple):
    """One sensed vehicle record. ``v``/``omega`` are the measured velocities."""

    t_us: int
    visual_id: str
    x: float
    y: float
    theta: float
    v: float
    omega: float

    @property
    def t(self) -> float:
        return self.t_us / 1e6


class ReceivedPacket(NamedTuple):
    """A watermark packet tagged with the transport address it came from."""

    address: str
    packet: WatermarkPacket


class AlignedSample(NamedTuple):
    """One observation paired with the packet whose inputs produced it.

    ``tick`` is the observation tick, i.e. the packet ``seq`` plus one.
    """

    address: str
    visual_id: str
    tick: int
    t_us: int
    o_v: float
    o_omega: float
    u_g_v: float
    u_g_omega: float
    e_v: float
    e_omega: float

    def residuals(self) -> tuple[float, float, float, float]:
        """(V1, V2) on the velocity channel followed by (V1, V2) on the angular channel."""
        return (
            self.o_v - self.u_g_v - self.e_v,
            self.o_v - self.u_g_v,
            self.o_omega - self.u_g_omega - self.e_omega,
            self.o_omega - self.u_g_omega,
        )
