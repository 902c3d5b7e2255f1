"""Watermark residuals, running/windowed second moments and finite-time chi-square tests.

Two families of residuals are supported:

* the scalar reference plant ``y[t+1] = a y[t] + b u[t] + w[t]`` (Test 1 removes
  the watermark, Test 2 keeps it), and
* the vehicle velocity form where the observed velocity is compared against
  the previous tick's policy input, with (V1) or without (V2) the watermark.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError

__all__ = [
    "ScalarModel",
    "NoiseConfig",
    "TestVerdict",
    "ChannelStats",
    "PairAccumulator",
    "residual_t1_scalar",
    "residual_t2_scalar",
    "residual_v1",
    "residual_v2",
    "update",
    "windowed_stat",
    "chi2_quantile",
    "chi2_test",
    "simulate_scalar",
    "scalar_residuals",
    "DEFAULT_WINDOW",
    "DEFAULT_ALPHA",
]

DEFAULT_WINDOW = 20
DEFAULT_ALPHA = 0.01


@dataclass(frozen=True)
class ScalarModel:
    a: float
    b: float
    sigma2_w: float

    def __post_init__(self):
        if self.sigma2_w < 0:
            raise ConfigError("sigma2_w must be non-negative")

    def test2_target(self, sigma2_e: float) -> float:
        return self.b**2 * sigma2_e + self.sigma2_w


@dataclass(frozen=True)
class NoiseConfig:
    sigma2_w_v: float = 0.0
    sigma2_w_omega: float = 0.0

    def validate(self) -> None:
        for name in ("sigma2_w_v", "sigma2_w_omega"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be a finite non-negative variance, got {value!r}")


@dataclass(frozen=True)
class TestVerdict:
    statistic: float
    dof: int
    lower: float
    upper: float
    passed: bool

    # keep pytest from collecting this as a test class
    __test__ = False

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "lower": self.lower,
            "upper": self.upper,
            "pass": self.passed,
        }


def residual_t1_scalar(z_t, z_prev, u_g_prev, e_prev, model: ScalarModel):
    return z_t - model.a * z_prev - model.b * u_g_prev - model.b * e_prev


def residual_t2_scalar(z_t, z_prev, u_g_prev, model: ScalarModel):
    return z_t - model.a * z_prev - model.b * u_g_prev


def residual_v1(o_v_t, u_g_v_prev, e_v_prev):
    """Observed velocity minus the commanded velocity and its watermark."""
    return o_v_t - u_g_v_prev - e_v_prev


def residual_v2(o_v_t, u_g_v_prev):
    return o_v_t - u_g_v_prev


@dataclass
class ChannelStats:
    """Running sum and sliding window of squared residuals for one test on one channel."""

    capacity: int = DEFAULT_WINDOW
    count: int = 0
    sum_sq: float = 0.0
    window: deque = field(default=None, repr=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("window capacity must be >= 1")
        if self.window is None:
            self.window = deque(maxlen=self.capacity)

    def push(self, residual: float) -> None:
        sq = residual * residual
        self.count += 1
        self.sum_sq += sq
        self.window.append(sq)

    @property
    def running(self) -> float:
        if self.count == 0:
            return math.nan
        return self.sum_sq / self.count

    def windowed(self, w: int | None = None) -> float:
        if w is None:
            w = self.capacity
        if w < 1:
            raise ValueError("window length must be >= 1")
        if w > self.capacity:
            raise ValueError(f"window length {w} exceeds stored capacity {self.capacity}")
        if self.count == 0:
            raise ValueError("no residuals accumulated yet")
        n = min(w, len(self.window))
        recent = list(self.window)[-n:]
        return math.fsum(recent) / n

    def copy(self) -> "ChannelStats":
        return ChannelStats(self.capacity, self.count, self.sum_sq, deque(self.window, maxlen=self.capacity))


_KEYS = ("t1_v", "t2_v", "t1_omega", "t2_omega")


class PairAccumulator:
    """Statistics for one (address, visual ID) pair.

    Holds four :class:`ChannelStats`: Test 1 and Test 2 on the translational
    (``v``) and angular (``omega``) channels. Channels are never pooled.
    """

    def __init__(self, window: int = DEFAULT_WINDOW):
        self.window = window
        self.stats = {key: ChannelStats(window) for key in _KEYS}

    @property
    def count(self) -> int:
        return self.stats["t1_v"].count

    @property
    def sum_sq_v1(self) -> float:
        return self.stats["t1_v"].sum_sq

    @property
    def sum_sq_v2(self) -> float:
        return self.stats["t2_v"].sum_sq

    def update(self, v1: float, v2: float, v1_omega: float | None = None, v2_omega: float | None = None):
        s = self.stats
        s["t1_v"].push(v1)
        s["t2_v"].push(v2)
        s["t1_omega"].push(0.0 if v1_omega is None else v1_omega)
        s["t2_omega"].push(0.0 if v2_omega is None else v2_omega)
        return self

    def running(self, key: str = "t1_v") -> float:
        return self.stats[key].running

    def windowed(self, key: str = "t1_v", w: int | None = None) -> float:
        return self.stats[key].windowed(w)

    def copy(self) -> "PairAccumulator":
        clone = PairAccumulator.__new__(PairAccumulator)
        clone.window = self.window
        clone.stats = {k: v.copy() for k, v in self.stats.items()}
        return clone

    def __repr__(self):
        return f"PairAccumulator(count={self.count}, t1_v={self.running('t1_v'):.6g}, t2_v={self.running('t2_v'):.6g})"


def update(acc: PairAccumulator, v1, v2, v1_omega=None, v2_omega=None) -> PairAccumulator:
    return acc.update(v1, v2, v1_omega, v2_omega)


def windowed_stat(acc: PairAccumulator | ChannelStats, w: int, key: str = "t1_v") -> float:
    """Mean of the last ``min(count, w)`` squared residuals."""
    if w < 1:
        raise ValueError("window length must be >= 1")
    if isinstance(acc, PairAccumulator):
        return acc.windowed(key, w)
    return acc.windowed(w)


def chi2_quantile(p: float, dof: int) -> float:
    if not 0 < p < 1:
        raise ValueError(f"probability must lie in (0, 1), got {p!r}")
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof!r}")
    return float(stats.chi2.ppf(p, dof))


def chi2_test(sum_sq: float, count: int, sigma2: float, alpha: float = DEFAULT_ALPHA) -> TestVerdict:
    """Two-sided finite-sample variance test on ``Q = sum_sq / sigma2``.

    Under the hypothesis the residuals are i.i.d. ``N(0, sigma2)``, ``Q`` is
    chi-square with ``count`` degrees of freedom. The acceptance interval is
    closed at both ends.
    """
    if not sigma2 > 0:
        raise ValueError(f"hypothesised variance must be positive, got {sigma2!r}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if count < 1:
        raise ValueError("chi-square test needs at least one residual")
    q = sum_sq / sigma2
    lower = chi2_quantile(alpha / 2, count)
    upper = chi2_quantile(1 - alpha / 2, count)
    return TestVerdict(q, count, lower, upper, lower <= q <= upper)


def simulate_scalar(
    model: ScalarModel,
    sigma2_e: float,
    steps: int,
    rng: np.random.Generator,
    gain: float = 0.3,
    z0: float = 0.0,
) -> dict[str, np.ndarray]:
    """Run the scalar plant honestly for ``steps`` transitions.

    The policy is a proportional feedback ``u^g[t] = -gain * z[t]``. Returns
    ``z`` (length ``steps + 1``) and ``u_g``, ``e``, ``w`` (length ``steps``).
    The sensor is honest, so ``z`` is the true output.
    """
    e = rng.normal(0.0, math.sqrt(sigma2_e), steps) if sigma2_e > 0 else np.zeros(steps)
    w = rng.normal(0.0, math.sqrt(model.sigma2_w), steps) if model.sigma2_w > 0 else np.zeros(steps)
    z = np.empty(steps + 1)
    u_g = np.empty(steps)
    z[0] = z0
    a, b = model.a, model.b
    y = z0
    for t in range(steps):
        u = -gain * y
        u_g[t] = u
        y = a * y + b * (u + e[t]) + w[t]
        z[t + 1] = y
    return {"z": z, "u_g": u_g, "e": e, "w": w}


def scalar_residuals(trace: dict[str, np.ndarray], model: ScalarModel, e_claimed: Sequence[float] | None = None):
    """Vectorised Test-1 and Test-2 residuals for a trace from :func:`simulate_scalar`."""
    z = trace["z"]
    e = trace["e"] if e_claimed is None else np.asarray(e_claimed)
    r1 = residual_t1_scalar(z[1:], z[:-1], trace["u_g"], e, model)
    r2 = residual_t2_scalar(z[1:], z[:-1], trace["u_g"], model)
    return r1, r2
