import json
import socket
import subprocess
import sys
import time
from importlib import resources
from pathlib import Path

import pytest

from wmatch.cli import main
from wmatch.net.protocol import WatermarkPacket
from wmatch.net.types import Observation, ReceivedPacket
from wmatch.rsu import analyze, AnalysisSettings

from conftest import FIELD_TRACE

LAB_TOML = Path(str(resources.files("wmatch") / "configs" / "lab_two_vehicle.toml")).read_text()


def write_config(tmp_path, **overrides):
    text = LAB_TOML
    for key, value in overrides.items():
        lines = []
        for line in text.splitlines():
            if line.split("=")[0].strip() == key and "=" in line:
                line = f"{key} = {value}"
            lines.append(line)
        text = "\n".join(lines) + "\n"
    path = tmp_path / "scenario.toml"
    path.write_text(text)
    return str(path)


def load_report(path):
    return json.loads((Path(path) / "report.json").read_text())


@pytest.fixture(scope="module")
def lab_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("lab")
    code = main(["simulate", "--config", "lab_two_vehicle", "--out", str(out)])
    return code, out


def test_simulate_lab_identifies_both(lab_out, capsys):
    code, out = lab_out
    assert code == 0
    for name in ("observations.csv", "packets.csv", "report.json", "series.csv", "meta.json"):
        assert (out / name).exists()
    rep = load_report(out)
    assert rep["correct"] is True
    truth = rep["ground_truth"]
    stat = {(p["address"], p["visual_id"]): p["t1_v"] for p in rep["pairs"]}
    assert stat["IP_1", truth["IP_1"]] < stat["IP_1", truth["IP_2"]]
    assert stat["IP_2", truth["IP_2"]] < stat["IP_2", truth["IP_1"]]


def test_lab_visual_ids(lab_out):
    rep = load_report(lab_out[1])
    assert rep["ground_truth"] == {"IP_1": "ID_A", "IP_2": "ID_B"}


def test_series_length_matches_aligned_counts(lab_out):
    out = lab_out[1]
    rep = load_report(out)
    rows = (out / "series.csv").read_text().splitlines()
    aligned = sum(a["aligned"] for a in rep["alignment"]["per_address"].values())
    assert len(rows) - 1 == rep["series_rows"] == aligned


def test_simulate_zero_duration_exits_2(tmp_path):
    cfg = write_config(tmp_path, duration="0.0")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_simulate_bad_config_exits_2(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2
    cfg = write_config(tmp_path, dt="-1.0")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_usage_errors_exit_2():
    assert main([]) == 2
    assert main(["simulate", "--out", "x"]) == 2
    assert main(["simulate", "--config", "lab_two_vehicle", "--out", "x", "--window", "0"]) == 2


def test_simulate_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, duration="8.0")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a), "--seed", "42"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b), "--seed", "42"]) == 0
    ra, rb = load_report(a), load_report(b)
    ra.pop("wall_clock_s"), rb.pop("wall_clock_s")
    assert ra == rb
    for name in ("observations.csv", "packets.csv", "series.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_replay_bundled_trace(tmp_path):
    code = main(["replay", "--obs", str(FIELD_TRACE / "observations.csv"),
                 "--packets", str(FIELD_TRACE / "packets.csv"), "--out", str(tmp_path)])
    assert code == 0
    rep = load_report(tmp_path)
    assert rep["correct"] is True
    assert rep["match"]["mapping"][0]["visual_id"] == "R2"


def test_replay_swapped_truth_exits_1(tmp_path):
    truth = tmp_path / "truth.json"
    truth.write_text(json.dumps({"ground_truth": {"10.0.0.21": "R1"}}))
    code = main(["replay", "--obs", str(FIELD_TRACE / "observations.csv"),
                 "--packets", str(FIELD_TRACE / "packets.csv"), "--out", str(tmp_path / "o"),
                 "--truth", str(truth)])
    assert code == 1


def test_replay_without_packets_exits_2(tmp_path, capsys):
    pk = tmp_path / "p.csv"
    pk.write_text("t_s,address,seq,u_g_v,u_g_omega,e_v,e_omega\n")
    code = main(["replay", "--obs", str(FIELD_TRACE / "observations.csv"), "--packets", str(pk), "--out", str(tmp_path)])
    assert code == 2
    assert "no transmitting addresses" in capsys.readouterr().err


def test_replay_malformed_exits_2(tmp_path):
    ob = tmp_path / "o.csv"
    ob.write_text("t_s,visual_id,x_m,y_m,theta_rad,v_mps,omega_radps\n0.1,A,1,2\n")
    code = main(["replay", "--obs", str(ob), "--packets", str(FIELD_TRACE / "packets.csv"), "--out", str(tmp_path)])
    assert code == 2
    assert main(["replay", "--obs", str(tmp_path / "nope.csv"), "--packets", str(ob), "--out", str(tmp_path)]) == 2


def test_simulate_then_replay_is_equivalent(lab_out, tmp_path):
    out = lab_out[1]
    code = main(["replay", "--obs", str(out / "observations.csv"), "--packets", str(out / "packets.csv"),
                 "--out", str(tmp_path)])
    assert code == 0
    sim, rep = load_report(out), load_report(tmp_path)
    assert rep["match"]["mapping"] == sim["match"]["mapping"]
    strip = ("verdicts",)
    assert [{k: v for k, v in p.items() if k not in strip} for p in rep["pairs"]] == \
           [{k: v for k, v in p.items() if k not in strip} for p in sim["pairs"]]
    assert (tmp_path / "series.csv").read_bytes() == (out / "series.csv").read_bytes()


def test_duplicate_sequence_numbers_are_counted():
    pk = [ReceivedPacket("ip", WatermarkPacket(k, k * 50_000, 1.0, 0.0, 0.0, 0.0)) for k in range(30)]
    # a second sender behind the same address replays seq 0..9
    clash = [ReceivedPacket("ip", WatermarkPacket(k, k * 50_000, 2.0, 0.0, 0.5, 0.0)) for k in range(10)]
    obs = [Observation(k * 50_000, "A", 0, 0, 0, 1.0, 0) for k in range(1, 31)]
    rep = analyze(obs, pk + clash, AnalysisSettings(dt=0.05)).to_dict()
    assert rep["alignment"]["per_address"]["ip"]["duplicates"] == 10
    assert rep["pairs"][0]["count"] == 30


# live listening -----------------------------------------------------------------

def free_port():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def listen(args, **kw):
    return subprocess.Popen([sys.executable, "-m", "wmatch.cli", "listen", *args],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, **kw)


def test_listen_loopback_end_to_end(tmp_path):
    port = free_port()
    out = tmp_path / "sim"
    cfg = write_config(tmp_path, duration="20.0")
    proc = listen(["--host", "127.0.0.1", "--port", str(port), "--obs", str(out / "observations.csv"),
                   "--duration", "5", "--dt", "0.05"])
    time.sleep(1.0)
    assert main(["simulate", "--config", cfg, "--out", str(out), "--emit", f"127.0.0.1:{port}"]) == 0
    stdout, stderr = proc.communicate(timeout=60)
    assert proc.returncode == 0, stderr
    lines = [json.loads(line) for line in stdout.splitlines()]
    assert len(lines) >= 2 and "mapping" in lines[0]
    final = lines[-1]
    assert final["final"] is True
    emit_map = json.loads((out / "emit_map.json").read_text())
    truth = json.loads((out / "meta.json").read_text())["ground_truth"]
    expected = {emit_map[addr]: vid for addr, vid in truth.items()}
    got = {m["address"]: m["visual_id"] for m in final["match"]["mapping"]}
    assert got == expected


def test_listen_without_packets_exits_1(tmp_path):
    obs = tmp_path / "o.csv"
    obs.write_text((FIELD_TRACE / "observations.csv").read_text())
    proc = listen(["--host", "127.0.0.1", "--port", str(free_port()), "--obs", str(obs), "--duration", "1.2"])
    stdout, _ = proc.communicate(timeout=30)
    assert proc.returncode == 1
    final = json.loads(stdout.splitlines()[-1])
    assert final["match"] is None and final["alignment"]["observations"] > 0


def test_listen_bind_failure_exits_2(tmp_path):
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        code = main(["listen", "--host", "127.0.0.1", "--port", str(port),
                     "--obs", str(tmp_path / "o.csv"), "--duration", "0.1"])
    assert code == 2
