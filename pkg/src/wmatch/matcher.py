"""All-pairs score matrix and the address to visual-ID assignment built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detector import DEFAULT_WINDOW, PairAccumulator
from .errors import NotReadyError

__all__ = [
    "ScoreMatrix",
    "PairMatch",
    "MatchReport",
    "ingest",
    "best_pair",
    "full_assignment",
    "confidence",
    "DEFAULT_MIN_COUNT",
]

DEFAULT_MIN_COUNT = 20

_TEST_KEYS = {"T1": "t1_v", "T2": "t2_v", "t1": "t1_v", "t2": "t2_v"}


class ScoreMatrix:
    """One :class:`PairAccumulator` per (address, visual ID).

    Rows and columns are kept in first-seen order. Adding a new address
    creates accumulators against every known visual ID and vice versa, so the
    matrix is always complete.
    """

    def __init__(self, window: int = DEFAULT_WINDOW, min_count: int = DEFAULT_MIN_COUNT):
        self.window = window
        self.min_count = min_count
        self.addresses: list[str] = []
        self.visual_ids: list[str] = []
        self.cells: dict[tuple[str, str], PairAccumulator] = {}

    def add_address(self, address: str) -> None:
        if address in self.addresses:
            return
        self.addresses.append(address)
        for vid in self.visual_ids:
            self.cells[(address, vid)] = PairAccumulator(self.window)

    def add_visual_id(self, visual_id: str) -> None:
        if visual_id in self.visual_ids:
            return
        self.visual_ids.append(visual_id)
        for addr in self.addresses:
            self.cells[(addr, visual_id)] = PairAccumulator(self.window)

    def ingest(self, address: str, visual_id: str, v1: float, v2: float, v1_omega=None, v2_omega=None):
        self.add_address(address)
        self.add_visual_id(visual_id)
        acc = self.cells[(address, visual_id)]
        acc.update(v1, v2, v1_omega, v2_omega)
        return acc

    def __getitem__(self, pair: tuple[str, str]) -> PairAccumulator:
        return self.cells[pair]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.addresses), len(self.visual_ids)

    def ready(self) -> bool:
        return bool(self.cells) and all(acc.count >= self.min_count for acc in self.cells.values())

    def averages(self, key: str = "t1_v") -> np.ndarray:
        """Running averages as an (address x visual ID) array."""
        out = np.full(self.shape, np.nan)
        for i, addr in enumerate(self.addresses):
            for j, vid in enumerate(self.visual_ids):
                out[i, j] = self.cells[(addr, vid)].running(key)
        return out

    def snapshot(self) -> "ScoreMatrix":
        clone = ScoreMatrix(self.window, self.min_count)
        clone.addresses = list(self.addresses)
        clone.visual_ids = list(self.visual_ids)
        clone.cells = {k: v.copy() for k, v in self.cells.items()}
        return clone


def ingest(matrix: ScoreMatrix, address, visual_id, v1, v2, v1_omega=None, v2_omega=None) -> ScoreMatrix:
    matrix.ingest(address, visual_id, v1, v2, v1_omega, v2_omega)
    return matrix


def _require_ready(matrix: ScoreMatrix) -> None:
    if not matrix.cells:
        raise NotReadyError("score matrix is empty")
    short = [(k, a.count) for k, a in matrix.cells.items() if a.count < matrix.min_count]
    if short:
        (addr, vid), n = min(short, key=lambda item: item[1])
        raise NotReadyError(
            f"{len(short)} pair(s) below {matrix.min_count} samples (e.g. {addr}/{vid} has {n})"
        )


def best_pair(matrix: ScoreMatrix, test: str = "T1") -> tuple[str, str]:
    """Joint argmin of the running average over every pair.

    Ties resolve to the lexicographically smallest (address, visual ID).
    """
    _require_ready(matrix)
    key = _TEST_KEYS[test]
    return min(matrix.cells, key=lambda pair: (matrix.cells[pair].running(key), pair))


@dataclass
class PairMatch:
    address: str
    visual_id: str
    statistic: float
    statistic_t2: float
    count: int
    runner_up: str | None = None
    runner_up_statistic: float | None = None
    margin: float | None = None
    ambiguous: bool = False

    def to_dict(self) -> dict:
        return {
            "address": self.address,
            "visual_id": self.visual_id,
            "statistic_t1": self.statistic,
            "statistic_t2": self.statistic_t2,
            "count": self.count,
            "runner_up": self.runner_up,
            "runner_up_statistic": self.runner_up_statistic,
            "margin": self.margin,
            "confidence": confidence_of(self),
            "ambiguous": self.ambiguous,
        }


@dataclass
class MatchReport:
    mapping: list[PairMatch] = field(default_factory=list)
    unmatched_addresses: list[str] = field(default_factory=list)
    unmatched_visual_ids: list[str] = field(default_factory=list)
    total_cost: float = 0.0
    timestamp: float | None = None

    def as_dict(self) -> dict[str, str]:
        return {m.address: m.visual_id for m in self.mapping}

    @property
    def unambiguous(self) -> bool:
        return bool(self.mapping) and not any(m.ambiguous for m in self.mapping)

    def to_dict(self) -> dict:
        return {
            "mapping": [m.to_dict() for m in self.mapping],
            "unmatched_addresses": list(self.unmatched_addresses),
            "unmatched_visual_ids": list(self.unmatched_visual_ids),
            "total_cost": self.total_cost,
            "timestamp": self.timestamp,
            "unambiguous": self.unambiguous,
        }


def _solve(cost: np.ndarray) -> list[tuple[int, int]]:
    rows, cols = linear_sum_assignment(cost)
    return sorted(zip(rows.tolist(), cols.tolist()))


def full_assignment(matrix: ScoreMatrix, timestamp: float | None = None) -> MatchReport:
    """Minimum-total-cost injective mapping on the Test-1 running averages.

    A rectangular matrix yields ``min(n_addresses, n_visual_ids)`` pairs; the
    remainder is listed as unmatched. Each matched row carries a margin
    against the best other visual ID in that row, floored at zero; a row
    whose chosen cell is not strictly the row minimum is flagged ambiguous.
    """
    _require_ready(matrix)
    cost = matrix.averages("t1_v")
    t2 = matrix.averages("t2_v")
    report = MatchReport(timestamp=timestamp)
    matched_rows, matched_cols = set(), set()
    for i, j in _solve(cost):
        addr, vid = matrix.addresses[i], matrix.visual_ids[j]
        match = PairMatch(addr, vid, float(cost[i, j]), float(t2[i, j]), matrix.cells[(addr, vid)].count)
        others = [(float(cost[i, k]), matrix.visual_ids[k]) for k in range(cost.shape[1]) if k != j]
        if others:
            stat, other = min(others, key=lambda item: (item[0], item[1]))
            match.runner_up = other
            match.runner_up_statistic = stat
            match.margin = max(0.0, stat - match.statistic)
            match.ambiguous = not stat > match.statistic
        report.mapping.append(match)
        report.total_cost += match.statistic
        matched_rows.add(i)
        matched_cols.add(j)
    report.unmatched_addresses = [a for i, a in enumerate(matrix.addresses) if i not in matched_rows]
    report.unmatched_visual_ids = [v for j, v in enumerate(matrix.visual_ids) if j not in matched_cols]
    return report


def confidence_of(match: PairMatch) -> float | None:
    if match.margin is None:
        return None
    if match.margin == 0:
        return 0.0
    if match.statistic == 0:
        return math.inf
    return match.margin / match.statistic


def confidence(report: MatchReport) -> dict[tuple[str, str], float | None]:
    """Margin over the chosen statistic for each matched pair (dimensionless)."""
    return {(m.address, m.visual_id): confidence_of(m) for m in report.mapping}
