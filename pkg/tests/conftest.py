from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from wmatch.config import load_config, parse_config
from wmatch.matcher import ScoreMatrix


def bundled(name: str) -> Path:
    return Path(str(resources.files("wmatch") / name))


FIELD_TRACE = bundled("data/field_trace")


def lab_config(duration=None, seed=None, **sensor):
    cfg = load_config("lab_two_vehicle")
    if duration is not None:
        from dataclasses import replace

        cfg = replace(cfg, duration=duration)
    if sensor:
        from dataclasses import replace

        cfg = replace(cfg, sensor=replace(cfg.sensor, **sensor))
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg


THREE_VEHICLE_TOML = """
[scenario]
name = "three"
dt = 0.05
duration = 40.0
seed = 3
v_max = 3.0
omega_max = 4.0

[sensor]
rate = 20.0

[paths.track]
kind = "oval"
half_length = 2.0
radius = 1.5
spacing = 0.05

[[vehicles]]
name = "a"
address = "10.1.0.1"
path = "track"
target_speed = 1.0
start_fraction = 0.0
watermark = { sigma2_e_v = 0.07 }
noise = { sigma2_w_v = 0.005, sigma2_w_omega = 0.005 }

[[vehicles]]
name = "b"
address = "10.1.0.2"
path = "track"
target_speed = 1.0
start_fraction = 0.333
watermark = { sigma2_e_v = 0.2 }
noise = { sigma2_w_v = 0.005, sigma2_w_omega = 0.005 }

[[vehicles]]
name = "c"
address = "10.1.0.3"
path = "track"
target_speed = 1.0
start_fraction = 0.667
watermark = { sigma2_e_v = 0.38 }
noise = { sigma2_w_v = 0.005, sigma2_w_omega = 0.005 }
"""


@pytest.fixture
def three_vehicle_config():
    return parse_config(THREE_VEHICLE_TOML)


def matrix_from_costs(costs, addresses=None, visual_ids=None, n=20) -> ScoreMatrix:
    """Matrix whose Test-1 running averages equal ``costs`` (n identical residuals per cell)."""
    costs = np.asarray(costs, dtype=float)
    addresses = addresses or [f"ip{i}" for i in range(costs.shape[0])]
    visual_ids = visual_ids or [f"id{j}" for j in range(costs.shape[1])]
    m = ScoreMatrix(min_count=n)
    for i, a in enumerate(addresses):
        for j, v in enumerate(visual_ids):
            r = float(np.sqrt(costs[i, j]))
            for _ in range(n):
                m.ingest(a, v, r, r)
    return m


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[str, str] = {}


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{criterion} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
