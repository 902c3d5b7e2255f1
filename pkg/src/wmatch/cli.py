"""Command line entry point: ``wmatch simulate | replay | listen | serve``.

Exit codes: 0 success, 1 wrong or missing identification, 2 usage, config,
input or bind errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import socket
import sys
import time
from pathlib import Path
from typing import Optional

from . import __version__
from .config import bundled_configs, load_config
from .errors import ConfigError
from .net.replay import (
    OBS_HEADER,
    ReplayError,
    load_replay,
    parse_observation_row,
    write_observations,
    write_packets,
)
from .net.transport import DEFAULT_PORT, UdpReceiver, UdpSender
from .rsu import (
    SERIES_HEADER,
    AnalysisSettings,
    LiveSession,
    RunReport,
    analyze,
    scenario_descriptor,
    simulation_settings,
)
from .sim import run_scenario

log = logging.getLogger("wmatch")

EXIT_OK, EXIT_MISMATCH, EXIT_ERROR = 0, 1, 2


def _setup_logging() -> None:
    level = os.environ.get("WMATCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def write_report(out: Path, report: RunReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for row in report.series:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_list()])


def _parse_hostport(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
            cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    result = run_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_observations(out / "observations.csv", result.observations)
    write_packets(out / "packets.csv", result.packets)
    (out / "meta.json").write_text(
        json.dumps({"scenario": cfg.name, "dt": cfg.dt, "seed": cfg.seed, "ground_truth": result.ground_truth},
                   indent=2, sort_keys=True) + "\n"
    )
    report = analyze(
        result.observations, result.packets, simulation_settings(cfg, args.window),
        scenario=scenario_descriptor(cfg), ground_truth=result.ground_truth,
    )
    write_report(out, report)

    if args.emit:
        target = _parse_hostport(args.emit)
        sender = UdpSender(target)
        try:
            emit_map = {addr: sender.source_address(addr) for addr in sorted(result.ground_truth)}
            (out / "emit_map.json").write_text(json.dumps(emit_map, indent=2, sort_keys=True) + "\n")
            sent = sender.send(result.packets)
        finally:
            sender.close()
        log.info("sent %d packets to %s:%d", sent, *target)

    if report.match is None:
        print(f"insufficient samples: {report.not_ready}", file=sys.stderr)
        return EXIT_ERROR
    _print_mapping(report)
    return EXIT_OK if report.correct else EXIT_MISMATCH


def _print_mapping(report: RunReport) -> None:
    for m in report.match.mapping:
        print(f"{m.address} -> {m.visual_id}  t1={m.statistic:.6g}  margin={m.margin if m.margin is None else round(m.margin, 6)}")


def _load_truth(path: Optional[str], obs_path: Path) -> Optional[dict[str, str]]:
    candidate = Path(path) if path else obs_path.parent / "meta.json"
    if not candidate.exists():
        if path:
            raise ReplayError(f"truth file not found: {path}")
        return None
    data = json.loads(candidate.read_text())
    truth = data.get("ground_truth", data)
    return {str(k): str(v) for k, v in truth.items()}


def cmd_replay(args) -> int:
    obs_path = Path(args.obs)
    try:
        observations, packets = load_replay(obs_path, args.packets)
        truth = _load_truth(args.truth, obs_path)
    except (OSError, ReplayError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not packets:
        print("no transmitting addresses", file=sys.stderr)
        return EXIT_ERROR
    settings = AnalysisSettings(dt=args.dt, window=args.window)
    report = analyze(observations, packets, settings,
                     scenario={"source": "replay", "observations_csv": obs_path.name}, ground_truth=truth)
    write_report(Path(args.out), report)
    if report.match is None:
        print(f"insufficient samples: {report.not_ready}", file=sys.stderr)
        return EXIT_ERROR
    _print_mapping(report)
    if truth is not None and not report.correct:
        return EXIT_MISMATCH
    return EXIT_OK if report.identified() else EXIT_MISMATCH


class CsvTail:
    """Follow an observation CSV as it grows, yielding complete rows only."""

    def __init__(self, path: Path):
        self.path = path
        self._fh = None
        self._buf = ""
        self._header_seen = False

    def poll(self) -> list:
        if self._fh is None:
            if not self.path.exists():
                return []
            self._fh = open(self.path, newline="")
        self._buf += self._fh.read()
        *lines, self._buf = self._buf.split("\n")
        out = []
        for line in lines:
            if not line.strip():
                continue
            if not self._header_seen:
                self._header_seen = True
                if line.strip().split(",") == OBS_HEADER:
                    continue
            out.append(parse_observation_row(next(csv.reader([line]))))
        return out

    def close(self):
        if self._fh:
            self._fh.close()


class UdpLineSource:
    """Observation rows (CSV text, one per datagram) arriving on a local socket."""

    def __init__(self, host: str, port: int):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.sock.setblocking(False)

    def poll(self) -> list:
        out = []
        while True:
            try:
                data, _ = self.sock.recvfrom(4096)
            except BlockingIOError:
                return out
            for line in data.decode().splitlines():
                if line.strip() and line.strip().split(",") != OBS_HEADER:
                    out.append(parse_observation_row(next(csv.reader([line]))))

    def close(self):
        self.sock.close()


def cmd_listen(args) -> int:
    truth = None
    if args.truth:
        truth = json.loads(Path(args.truth).read_text())
        truth = truth.get("ground_truth", truth)
    if args.obs.startswith("udp://"):
        try:
            source = UdpLineSource(*_parse_hostport(args.obs[len("udp://"):]))
        except OSError as exc:
            print(f"cannot bind observation socket: {exc}", file=sys.stderr)
            return EXIT_ERROR
    else:
        source = CsvTail(Path(args.obs))
    try:
        receiver = UdpReceiver(args.host, args.port).start()
    except OSError as exc:
        source.close()
        print(f"cannot bind UDP port {args.port}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    session = LiveSession(AnalysisSettings(dt=args.dt, window=args.window), ground_truth=truth)
    deadline = time.monotonic() + args.duration
    next_snapshot = time.monotonic() + 1.0
    try:
        while True:
            now = time.monotonic()
            session.add_packets(receiver.drain())
            try:
                session.add_observations(source.poll())
            except ValueError as exc:
                session.bump("bad_observation_rows")
                log.warning("skipping observation row: %s", exc)
            if now >= next_snapshot:
                snap = session.report({"source": "listen"})
                print(json.dumps(_snapshot_line(snap), sort_keys=True), flush=True)
                next_snapshot += 1.0
            if now >= deadline:
                break
            time.sleep(0.02)
        session.add_packets(receiver.drain())
        session.add_observations(source.poll())
    finally:
        receiver.close()
        source.close()
    for name, n in receiver.counters.items():
        session.bump(f"udp_{name}", n)
    report = session.report({"source": "listen", "port": receiver.address[1]})
    if args.out:
        write_report(Path(args.out), report)
    print(json.dumps({"final": True, **report.to_dict()}, sort_keys=True), flush=True)
    if report.match is None or not report.mapping:
        return EXIT_MISMATCH
    if truth is not None and not report.correct:
        return EXIT_MISMATCH
    return EXIT_OK if report.identified() else EXIT_MISMATCH


def _snapshot_line(report: RunReport) -> dict:
    return {
        "t_s": report.match.timestamp if report.match else None,
        "mapping": report.mapping,
        "not_ready": report.not_ready,
        "observations": report.observations,
        "aligned": {a: s.aligned for a, s in report.drops.items()},
    }


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    app = create_app(udp_port=args.udp_port)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level=os.environ.get("WMATCH_LOG", "warning").lower())
    except OSError as exc:
        print(f"cannot start server: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wmatch", description="Match V2I addresses to sensed vehicles by dynamic watermarking.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario in-process and score it")
    s.add_argument("--config", required=True, help=f"config path or bundled name ({', '.join(bundled_configs())})")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--window", type=int, default=20)
    s.add_argument("--emit", metavar="HOST:PORT", help="also send the packets over UDP")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replay", help="score recorded observation and packet CSVs")
    r.add_argument("--obs", required=True)
    r.add_argument("--packets", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--window", type=int, default=20)
    r.add_argument("--dt", type=float, help="control period in seconds (default: inferred)")
    r.add_argument("--truth", help="JSON with the expected address -> visual ID mapping")
    r.set_defaults(func=cmd_replay)

    li = sub.add_parser("listen", help="receive packets over UDP and match them live")
    li.add_argument("--port", type=int, default=DEFAULT_PORT)
    li.add_argument("--host", default="0.0.0.0")
    li.add_argument("--obs", required=True, help="observation CSV to tail, or udp://host:port")
    li.add_argument("--duration", type=float, required=True)
    li.add_argument("--window", type=int, default=20)
    li.add_argument("--dt", type=float)
    li.add_argument("--truth")
    li.add_argument("--out")
    li.set_defaults(func=cmd_listen)

    sv = sub.add_parser("serve", help="run the RSU HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.add_argument("--udp-port", type=int, help="also ingest watermark packets on this UDP port")
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    if getattr(args, "window", 20) < 1:
        print("--window must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
