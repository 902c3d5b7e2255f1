"""Seeded Gaussian watermark generation and injection onto control inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError

__all__ = [
    "WatermarkConfig",
    "ExcitationSample",
    "WatermarkGenerator",
    "new_generator",
    "draw",
    "inject",
]


@dataclass(frozen=True)
class WatermarkConfig:
    sigma2_e_v: float = 0.0
    sigma2_e_omega: float = 0.0
    # None means "derive from the scenario seed"; a generator needs a concrete value
    seed: Optional[int] = None

    def validate(self) -> None:
        for name in ("sigma2_e_v", "sigma2_e_omega"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be a finite non-negative variance, got {value!r}")
        if self.seed is not None and not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed!r}")

    @property
    def active(self) -> bool:
        return self.sigma2_e_v > 0 or self.sigma2_e_omega > 0


@dataclass(frozen=True)
class ExcitationSample:
    tick: int
    e_v: float
    e_omega: float


class WatermarkGenerator:
    """Private excitation source for one vehicle.

    Each call to :meth:`draw` consumes exactly two standard normals from a
    PCG64 stream, so the sequence depends only on ``(seed, variances)``.
    Not thread-safe; give every vehicle its own generator.
    """

    def __init__(self, config: WatermarkConfig):
        config.validate()
        if config.seed is None:
            raise ConfigError("watermark generator needs an explicit seed")
        self.config = config
        self._rng = np.random.Generator(np.random.PCG64(int(config.seed)))
        self._std_v = math.sqrt(config.sigma2_e_v)
        self._std_omega = math.sqrt(config.sigma2_e_omega)
        self._tick = 0

    @property
    def tick(self) -> int:
        """Index of the next sample to be drawn."""
        return self._tick

    def draw(self) -> ExcitationSample:
        z_v, z_omega = self._rng.standard_normal(2)
        sample = ExcitationSample(
            self._tick, self._std_v * float(z_v), self._std_omega * float(z_omega)
        )
        self._tick += 1
        return sample

    def draw_block(self, n: int) -> np.ndarray:
        """Draw ``n`` samples at once as an ``(n, 2)`` array of ``(e_v, e_omega)``.

        Produces the same values as ``n`` successive :meth:`draw` calls.
        """
        z = self._rng.standard_normal((n, 2))
        z[:, 0] *= self._std_v
        z[:, 1] *= self._std_omega
        self._tick += n
        return z


def new_generator(config: WatermarkConfig) -> WatermarkGenerator:
    return WatermarkGenerator(config)


def draw(gen: WatermarkGenerator) -> ExcitationSample:
    return gen.draw()


def inject(u_g_v: float, u_g_omega: float, e: ExcitationSample) -> tuple[float, float]:
    """Superpose the watermark on the policy input: ``u = u^g + e`` per channel."""
    return u_g_v + e.e_v, u_g_omega + e.e_omega
