"""RSU-side analysis: align streams, score every pair, assign, and package a report."""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .detector import DEFAULT_ALPHA, DEFAULT_WINDOW, NoiseConfig, chi2_test
from .errors import NotReadyError
from .matcher import DEFAULT_MIN_COUNT, MatchReport, ScoreMatrix, best_pair, full_assignment
from .net.align import AddressStats, AlignPolicy, align, infer_dt
from .net.types import Observation, ReceivedPacket
from .sim import ScenarioConfig

__all__ = [
    "AnalysisSettings",
    "LiveSession",
    "RunReport",
    "SERIES_HEADER",
    "SeriesRow",
    "analyze",
    "json_safe",
    "scenario_descriptor",
    "simulation_settings",
]

SERIES_HEADER = [
    "t_s", "address", "visual_id", "count",
    "t1_v_run", "t1_v_win", "t2_v_run", "t2_v_win",
    "t1_omega_run", "t1_omega_win", "t2_omega_run", "t2_omega_win",
]


@dataclass
class AnalysisSettings:
    dt: Optional[float] = None  # inferred from packet spacing when None
    window: int = DEFAULT_WINDOW
    min_count: int = DEFAULT_MIN_COUNT
    alpha: float = DEFAULT_ALPHA
    staleness: Optional[float] = None
    reorder_buffer: int = 8
    # per-address hypothesised residual variances, keyed "t1_v", "t2_v", "t1_omega", "t2_omega"
    hypotheses: dict[str, dict[str, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class SeriesRow:
    t_us: int
    address: str
    visual_id: str
    count: int
    values: tuple  # ordered as SERIES_HEADER[4:]

    def as_list(self) -> list:
        return [self.t_us / 1e6, self.address, self.visual_id, self.count, *self.values]


@dataclass
class RunReport:
    scenario: dict
    matrix: ScoreMatrix
    match: Optional[MatchReport]
    not_ready: Optional[str]
    best_pairs: dict
    series: list[SeriesRow]
    drops: dict[str, AddressStats]
    verdicts: dict
    observations: int
    ground_truth: Optional[dict[str, str]] = None
    extra_counters: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    @property
    def mapping(self) -> dict[str, str]:
        return self.match.as_dict() if self.match else {}

    @property
    def correct(self) -> Optional[bool]:
        if self.ground_truth is None or self.match is None:
            return None
        return self.mapping == self.ground_truth

    def identified(self) -> bool:
        """Every transmitting address is matched and no match is ambiguous."""
        return (
            self.match is not None
            and self.match.unambiguous
            and not self.match.unmatched_addresses
        )

    def pair_table(self) -> list[dict]:
        rows = []
        for (addr, vid), acc in sorted(self.matrix.cells.items()):
            row = {"address": addr, "visual_id": vid, "count": acc.count}
            for key in ("t1_v", "t2_v", "t1_omega", "t2_omega"):
                row[key] = acc.running(key)
                row[f"{key}_window"] = acc.windowed(key) if acc.count else None
            row["verdicts"] = self.verdicts.get((addr, vid), {})
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return json_safe({
            "scenario": self.scenario,
            "addresses": list(self.matrix.addresses),
            "visual_ids": list(self.matrix.visual_ids),
            "match": self.match.to_dict() if self.match else None,
            "not_ready": self.not_ready,
            "best_pair": self.best_pairs,
            "pairs": self.pair_table(),
            "alignment": {
                "observations": self.observations,
                "per_address": {a: s.to_dict() for a, s in sorted(self.drops.items())},
                **self.extra_counters,
            },
            "series_rows": len(self.series),
            "ground_truth": self.ground_truth,
            "correct": self.correct,
            "identified": self.identified(),
            "wall_clock_s": self.wall_clock_s,
        })


def json_safe(obj):
    """Replace non-finite floats with None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def hypotheses_from_noise(noise: NoiseConfig, sigma2_e_v: float, sigma2_e_omega: float,
                          sensor_v_var: float = 0.0, sensor_omega_var: float = 0.0) -> dict[str, float]:
    """Honest-pair residual variances: Test 1 sees process plus sensor noise, Test 2 adds the watermark."""
    t1_v = noise.sigma2_w_v + sensor_v_var
    t1_w = noise.sigma2_w_omega + sensor_omega_var
    return {"t1_v": t1_v, "t2_v": t1_v + sigma2_e_v, "t1_omega": t1_w, "t2_omega": t1_w + sigma2_e_omega}


def scenario_descriptor(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "dt": cfg.dt,
        "duration": cfg.duration,
        "seed": cfg.seed,
        "ticks": cfg.n_ticks,
        "sensor_rate": cfg.sensor.rate,
        "vehicles": [
            {
                "name": v.name,
                "address": v.address,
                "controller": v.controller,
                "target_speed": v.target_speed,
                "sigma2_e_v": v.watermark.sigma2_e_v if v.watermark else 0.0,
                "sigma2_e_omega": v.watermark.sigma2_e_omega if v.watermark else 0.0,
                "sigma2_w_v": v.noise.sigma2_w_v,
                "sigma2_w_omega": v.noise.sigma2_w_omega,
            }
            for v in cfg.vehicles
        ],
    }


def simulation_settings(cfg: ScenarioConfig, window: int) -> AnalysisSettings:
    hyps = {}
    for v in cfg.vehicles:
        if v.address is None:
            continue
        wm = v.watermark
        hyps[v.address] = hypotheses_from_noise(
            v.noise,
            wm.sigma2_e_v if wm else 0.0,
            wm.sigma2_e_omega if wm else 0.0,
            cfg.sensor.velocity_noise_std**2,
            cfg.sensor.omega_noise_std**2,
        )
    return AnalysisSettings(dt=cfg.dt, window=window, hypotheses=hyps)


def analyze(
    observations: Iterable[Observation],
    packets: Iterable[ReceivedPacket],
    settings: AnalysisSettings | None = None,
    scenario: dict | None = None,
    ground_truth: dict[str, str] | None = None,
) -> RunReport:
    started = time.perf_counter()
    settings = settings or AnalysisSettings()
    observations = list(observations)
    packets = list(packets)
    dt = settings.dt if settings.dt is not None else infer_dt(packets)
    matrix = ScoreMatrix(settings.window, settings.min_count)
    series: list[SeriesRow] = []
    drops: dict[str, AddressStats] = {}
    n_obs = len(observations)
    if dt is not None and packets:
        aligned = align(observations, packets, AlignPolicy(dt, settings.staleness, settings.reorder_buffer))
        drops = aligned.stats
        for vid in sorted({o.visual_id for o in observations}):
            matrix.add_visual_id(vid)
        for addr in sorted(drops):
            matrix.add_address(addr)
        for s in aligned.samples:
            acc = matrix.ingest(s.address, s.visual_id, *s.residuals())
            st = acc.stats
            series.append(SeriesRow(s.t_us, s.address, s.visual_id, acc.count, (
                st["t1_v"].running, st["t1_v"].windowed(),
                st["t2_v"].running, st["t2_v"].windowed(),
                st["t1_omega"].running, st["t1_omega"].windowed(),
                st["t2_omega"].running, st["t2_omega"].windowed(),
            )))

    match, not_ready = None, None
    best = {"T1": None, "T2": None}
    try:
        last_t = max((o.t_us for o in observations), default=0) / 1e6
        match = full_assignment(matrix, timestamp=last_t)
        best = {t: list(best_pair(matrix, t)) for t in ("T1", "T2")}
    except NotReadyError as exc:
        not_ready = str(exc)

    verdicts = {}
    for (addr, vid), acc in matrix.cells.items():
        hyp = settings.hypotheses.get(addr)
        if not hyp or acc.count == 0:
            continue
        out = {}
        for key, sigma2 in hyp.items():
            if sigma2 > 0:
                ch = acc.stats[key]
                out[key] = chi2_test(ch.sum_sq, ch.count, sigma2, settings.alpha).to_dict()
        verdicts[(addr, vid)] = out

    scenario = dict(scenario or {})
    scenario.setdefault("dt", dt)
    scenario.setdefault("window", settings.window)
    scenario.setdefault("min_count", settings.min_count)
    report = RunReport(
        scenario=scenario,
        matrix=matrix,
        match=match,
        not_ready=not_ready,
        best_pairs=best,
        series=series,
        drops=drops,
        verdicts=verdicts,
        observations=n_obs,
        ground_truth=ground_truth,
    )
    report.wall_clock_s = time.perf_counter() - started
    return report


class LiveSession:
    """Thread-safe accumulation of live streams with on-demand reports.

    Snapshots re-run the full alignment over everything received so far,
    which keeps live output identical to an offline replay of the same data.
    """

    def __init__(self, settings: AnalysisSettings | None = None, ground_truth: dict[str, str] | None = None):
        self.settings = settings or AnalysisSettings()
        self.ground_truth = ground_truth
        self._obs: list[Observation] = []
        self._pkts: list[ReceivedPacket] = []
        self._lock = threading.Lock()
        self.counters: dict[str, int] = {}

    def add_observations(self, items: Iterable[Observation]) -> int:
        items = list(items)
        with self._lock:
            self._obs.extend(items)
        return len(items)

    def add_packets(self, items: Iterable[ReceivedPacket]) -> int:
        items = list(items)
        with self._lock:
            self._pkts.extend(items)
        return len(items)

    def bump(self, name: str, n: int = 1) -> None:
        with self._lock:
            self.counters[name] = self.counters.get(name, 0) + n

    @property
    def sizes(self) -> tuple[int, int]:
        with self._lock:
            return len(self._obs), len(self._pkts)

    def reset(self) -> None:
        with self._lock:
            self._obs.clear()
            self._pkts.clear()
            self.counters.clear()

    def report(self, scenario: dict | None = None) -> RunReport:
        with self._lock:
            obs = sorted(self._obs, key=lambda o: o.t_us)
            pkts = list(self._pkts)
            counters = dict(self.counters)
        rep = analyze(obs, pkts, self.settings, scenario=scenario, ground_truth=self.ground_truth)
        rep.extra_counters = counters
        return rep
