"""Request and response models for the RSU HTTP API."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field, field_validator


class ObservationIn(BaseModel):
    t_s: float = Field(ge=0)
    visual_id: str = Field(min_length=1)
    x_m: float = 0.0
    y_m: float = 0.0
    theta_rad: float = 0.0
    v_mps: float
    omega_radps: float = 0.0


class PacketIn(BaseModel):
    address: str = Field(min_length=1)
    seq: int = Field(ge=0, lt=2**32)
    t_s: float = Field(ge=0)
    u_g_v: float
    u_g_omega: float = 0.0
    e_v: float
    e_omega: float = 0.0


class DatagramIn(BaseModel):
    """A raw 56-byte wire packet, hex encoded, with the address it came from."""

    address: str = Field(min_length=1)
    payload_hex: str

    @field_validator("payload_hex")
    @classmethod
    def must_be_hex(cls, value: str) -> str:
        bytes.fromhex(value)
        return value


class IngestResult(BaseModel):
    accepted: int
    rejected: int = 0
    observations: int
    packets: int
    errors: list[str] = []


class SessionSettings(BaseModel):
    dt: Optional[float] = Field(default=None, gt=0)
    window: int = Field(default=20, ge=1)
    min_count: int = Field(default=20, ge=1)
    ground_truth: Optional[dict[str, str]] = None


class SimulateRequest(BaseModel):
    config: str = Field(description="bundled scenario name or a TOML document")
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    window: int = Field(default=20, ge=1)


class ReplayRequest(BaseModel):
    observations_csv: str
    packets_csv: str
    window: int = Field(default=20, ge=1)
    dt: Optional[float] = Field(default=None, gt=0)
    ground_truth: Optional[dict[str, str]] = None


class PairMatchOut(BaseModel):
    address: str
    visual_id: str
    statistic_t1: Optional[float]
    statistic_t2: Optional[float]
    count: int
    runner_up: Optional[str] = None
    runner_up_statistic: Optional[float] = None
    margin: Optional[float] = None
    confidence: Optional[float] = None
    ambiguous: bool = False


class MatchOut(BaseModel):
    mapping: list[PairMatchOut]
    unmatched_addresses: list[str]
    unmatched_visual_ids: list[str]
    total_cost: Optional[float]
    timestamp: Optional[float]
    unambiguous: bool


class ReportOut(BaseModel):
    scenario: dict
    addresses: list[str]
    visual_ids: list[str]
    match: Optional[MatchOut]
    not_ready: Optional[str]
    best_pair: dict
    pairs: list[dict]
    alignment: dict
    series_rows: int
    ground_truth: Optional[dict[str, str]]
    correct: Optional[bool]
    identified: bool
    wall_clock_s: Optional[float]
