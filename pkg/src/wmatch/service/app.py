"""RSU HTTP service.

A single live session accumulates observations and packets (posted as JSON,
as raw wire datagrams, or received on an optional UDP port) and reports the
current address to visual-ID mapping on demand. Stateless endpoints run a
bundled or posted scenario, or score posted CSV replays.
"""

from __future__ import annotations

import csv
import io
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException

from ..config import bundled_configs, load_config, parse_config
from ..errors import ConfigError
from ..net.protocol import PacketError, WatermarkPacket, decode
from ..net.replay import OBS_HEADER, PKT_HEADER, parse_observation_row, parse_packet_row
from ..net.transport import UdpReceiver
from ..net.types import Observation, ReceivedPacket
from ..rsu import AnalysisSettings, LiveSession, analyze, scenario_descriptor, simulation_settings
from ..sim import run_scenario
from .schemas import (
    DatagramIn,
    IngestResult,
    ObservationIn,
    PacketIn,
    ReplayRequest,
    ReportOut,
    SessionSettings,
    SimulateRequest,
)


def _t_us(t_s: float) -> int:
    return int(round(t_s * 1e6))


def _parse_csv(text: str, header: list[str], parse):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return []
    if [c.strip() for c in rows[0]] != header:
        raise HTTPException(422, f"expected header {','.join(header)}")
    out = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            out.append(parse(row))
        except (ValueError, TypeError) as exc:
            raise HTTPException(422, f"line {line}: {exc}") from None
    return out


def create_app(udp_port: int | None = None, udp_host: str = "0.0.0.0") -> FastAPI:
    state = {"session": LiveSession(), "receiver": None}

    def pump() -> None:
        receiver = state["receiver"]
        if receiver is not None:
            state["session"].add_packets(receiver.drain())

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if udp_port is not None:
            state["receiver"] = UdpReceiver(udp_host, udp_port).start()
        yield
        if state["receiver"] is not None:
            state["receiver"].close()

    app = FastAPI(title="wmatch RSU", version="0.1.0", lifespan=lifespan)

    def counts() -> dict:
        n_obs, n_pkts = state["session"].sizes
        return {"observations": n_obs, "packets": n_pkts}

    @app.get("/health")
    def health():
        return {"status": "ok", **counts()}

    @app.get("/v1/configs")
    def configs():
        return {"configs": bundled_configs()}

    @app.post("/v1/simulate", response_model=ReportOut)
    def simulate(req: SimulateRequest):
        try:
            cfg = load_config(req.config) if req.config in bundled_configs() else parse_config(req.config, "<request>")
            if req.seed is not None:
                cfg = cfg.with_seed(req.seed)
                cfg.validate()
        except ConfigError as exc:
            raise HTTPException(422, str(exc)) from None
        result = run_scenario(cfg)
        report = analyze(result.observations, result.packets, simulation_settings(cfg, req.window),
                         scenario=scenario_descriptor(cfg), ground_truth=result.ground_truth)
        return report.to_dict()

    @app.post("/v1/replay", response_model=ReportOut)
    def replay(req: ReplayRequest):
        obs = _parse_csv(req.observations_csv, OBS_HEADER, parse_observation_row)
        pkts = _parse_csv(req.packets_csv, PKT_HEADER, parse_packet_row)
        if not pkts:
            raise HTTPException(422, "no transmitting addresses")
        report = analyze(sorted(obs, key=lambda o: o.t_us), pkts,
                         AnalysisSettings(dt=req.dt, window=req.window),
                         scenario={"source": "replay"}, ground_truth=req.ground_truth)
        return report.to_dict()

    @app.put("/v1/session", response_model=dict)
    def configure(settings: SessionSettings):
        state["session"] = LiveSession(
            AnalysisSettings(dt=settings.dt, window=settings.window, min_count=settings.min_count),
            ground_truth=settings.ground_truth,
        )
        return counts()

    @app.delete("/v1/session")
    def reset():
        state["session"].reset()
        return counts()

    @app.post("/v1/session/observations", response_model=IngestResult)
    def post_observations(items: list[ObservationIn]):
        n = state["session"].add_observations(
            Observation(_t_us(o.t_s), o.visual_id, o.x_m, o.y_m, o.theta_rad, o.v_mps, o.omega_radps) for o in items
        )
        return IngestResult(accepted=n, **counts())

    @app.post("/v1/session/packets", response_model=IngestResult)
    def post_packets(items: list[PacketIn]):
        n = state["session"].add_packets(
            ReceivedPacket(p.address, WatermarkPacket(p.seq, _t_us(p.t_s), p.u_g_v, p.u_g_omega, p.e_v, p.e_omega))
            for p in items
        )
        return IngestResult(accepted=n, **counts())

    @app.post("/v1/session/datagrams", response_model=IngestResult)
    def post_datagrams(items: list[DatagramIn]):
        good, errors = [], []
        for i, d in enumerate(items):
            try:
                good.append(ReceivedPacket(d.address, decode(bytes.fromhex(d.payload_hex))))
            except PacketError as exc:
                errors.append(f"{i}: {type(exc).__name__}: {exc}")
        state["session"].add_packets(good)
        if errors:
            state["session"].bump("rejected_datagrams", len(errors))
        return IngestResult(accepted=len(good), rejected=len(errors), errors=errors, **counts())

    @app.get("/v1/session/report", response_model=ReportOut)
    def session_report():
        pump()
        return state["session"].report({"source": "session"}).to_dict()

    return app


app = create_app()
