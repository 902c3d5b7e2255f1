"""Kinematic multi-vehicle simulator with watermarking actuators and a noisy track sensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .detector import NoiseConfig
from .errors import ConfigError
from .net.protocol import WatermarkPacket
from .net.types import Observation, ReceivedPacket
from .watermark import ExcitationSample, WatermarkConfig, WatermarkGenerator, inject

__all__ = [
    "VehicleState",
    "Path",
    "oval_path",
    "straight_path",
    "wrap_angle",
    "step_kinematics",
    "PursuitController",
    "track_controller",
    "SensorConfig",
    "Sensor",
    "sense",
    "VehicleConfig",
    "ScenarioConfig",
    "ScenarioResult",
    "run_scenario",
]

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(theta, TWO_PI)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float
    tick: int = 0
    # velocities actually realised during the step that ended in this state
    v: float = 0.0
    omega: float = 0.0


def step_kinematics(
    s: VehicleState,
    u_v: float,
    u_omega: float,
    noise: NoiseConfig,
    rng: np.random.Generator,
    dt: float,
) -> VehicleState:
    """One forward-Euler step of the unicycle model with additive velocity noise.

    The same perturbed speed ``u_v + w_v`` drives both position updates.
    """
    z_v, z_omega = rng.standard_normal(2)
    v = u_v + math.sqrt(noise.sigma2_w_v) * float(z_v)
    omega = u_omega + math.sqrt(noise.sigma2_w_omega) * float(z_omega)
    return VehicleState(
        x=s.x + dt * math.cos(s.theta) * v,
        y=s.y + dt * math.sin(s.theta) * v,
        theta=wrap_angle(s.theta + dt * omega),
        tick=s.tick + 1,
        v=v,
        omega=omega,
    )


class Path:
    """Polyline with arc-length parametrisation; optionally closed."""

    def __init__(self, points, closed: bool = False):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ConfigError("a path needs at least two (x, y) waypoints")
        self.points = pts
        self.closed = closed
        seg_end = np.vstack([pts[1:], pts[:1]]) if closed else pts[1:]
        seg = seg_end - (pts if closed else pts[:-1])
        self._seg_start = pts if closed else pts[:-1]
        self._seg = seg
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self._seg_len <= 0):
            raise ConfigError("path contains repeated consecutive waypoints")
        self._s = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self._s[-1])

    def __len__(self):
        return len(self.points)

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Arc-length of the closest point on the path and the signed lateral offset.

        Offset is positive to the left of the direction of travel.
        """
        d = np.array([x, y]) - self._seg_start
        t = np.clip(np.einsum("ij,ij->i", d, self._seg) / self._seg_len**2, 0.0, 1.0)
        foot = self._seg_start + t[:, None] * self._seg
        dist2 = np.sum((np.array([x, y]) - foot) ** 2, axis=1)
        i = int(np.argmin(dist2))
        s = float(self._s[i] + t[i] * self._seg_len[i])
        sx, sy = self._seg[i]
        cross = sx * d[i, 1] - sy * d[i, 0]
        return s, math.copysign(math.sqrt(float(dist2[i])), cross) if dist2[i] > 0 else 0.0

    def point_at(self, s: float) -> tuple[float, float]:
        if self.closed:
            s = s % self.length
        elif s >= self.length:
            # extrapolate past the end along the final segment
            (x, y), (dx, dy) = self.points[-1], self._seg[-1] / self._seg_len[-1]
            extra = s - self.length
            return float(x + extra * dx), float(y + extra * dy)
        s = max(s, 0.0)
        i = min(int(np.searchsorted(self._s, s, side="right")) - 1, len(self._seg) - 1)
        t = (s - self._s[i]) / self._seg_len[i]
        px, py = self._seg_start[i] + t * self._seg[i]
        return float(px), float(py)

    def heading_at(self, s: float) -> float:
        if self.closed:
            s = s % self.length
        s = min(max(s, 0.0), self.length)
        i = min(int(np.searchsorted(self._s, s, side="right")) - 1, len(self._seg) - 1)
        sx, sy = self._seg[i]
        return math.atan2(sy, sx)

    def pose_at(self, s: float) -> tuple[float, float, float]:
        x, y = self.point_at(s)
        return x, y, self.heading_at(s)


def oval_path(half_length: float, radius: float, spacing: float) -> Path:
    """Counter-clockwise stadium: two straights of ``2*half_length`` joined by semicircles.

    Starts at the middle of the bottom straight heading +x.
    """
    if half_length < 0 or radius <= 0 or spacing <= 0:
        raise ConfigError("oval needs half_length >= 0, radius > 0, spacing > 0")
    L, r = half_length, radius
    perimeter = 4 * L + TWO_PI * r
    n = max(8, int(round(perimeter / spacing)))
    arc = math.pi * r
    pts = []
    for k in range(n):
        s = (k * perimeter / n + L) % perimeter  # shift so s=0 is the bottom-straight midpoint
        if s < 2 * L:
            pts.append((-L + s, -r))
        elif s < 2 * L + arc:
            phi = -math.pi / 2 + (s - 2 * L) / r
            pts.append((L + r * math.cos(phi), r * math.sin(phi)))
        elif s < 4 * L + arc:
            pts.append((L - (s - 2 * L - arc), r))
        else:
            phi = math.pi / 2 + (s - 4 * L - arc) / r
            pts.append((-L + r * math.cos(phi), r * math.sin(phi)))
    return Path(pts, closed=True)


def straight_path(length: float, spacing: float, y: float = 0.0, x0: float = 0.0) -> Path:
    if length <= 0 or spacing <= 0:
        raise ConfigError("straight path needs positive length and spacing")
    n = max(1, int(round(length / spacing)))
    xs = x0 + np.linspace(0.0, length, n + 1)
    return Path(np.column_stack([xs, np.full_like(xs, y)]), closed=False)


@dataclass(frozen=True)
class PursuitController:
    """Pure-pursuit steering plus a saturated speed command.

    Any policy works for matching as long as the RSU receives its output, so
    this stays deliberately simple.
    """

    lookahead: float = 0.5
    v_max: float = 30.0
    omega_max: float = 3.0

    def __call__(self, s: VehicleState, path: Path, target_speed: float) -> tuple[float, float]:
        if path is None or len(path) < 2:
            raise ConfigError("tracking controller needs a path with at least two waypoints")
        u_v = min(max(target_speed, -self.v_max), self.v_max)
        proj, _ = path.project(s.x, s.y)
        tx, ty = path.point_at(proj + self.lookahead)
        alpha = wrap_angle(math.atan2(ty - s.y, tx - s.x) - s.theta)
        dist = math.hypot(tx - s.x, ty - s.y)
        if dist == 0.0:
            return u_v, 0.0
        u_omega = 2.0 * u_v * math.sin(alpha) / dist
        return u_v, min(max(u_omega, -self.omega_max), self.omega_max)


def track_controller(s: VehicleState, path: Path, target_speed: float, lookahead: float = 0.5):
    return PursuitController(lookahead=lookahead)(s, path, target_speed)


@dataclass(frozen=True)
class SensorConfig:
    rate: float = 20.0
    position_noise_std: float = 0.0
    heading_noise_std: float = 0.0
    velocity_noise_std: float = 0.0
    omega_noise_std: float = 0.0
    # "sensor": speed reported directly (radar-like); "pose_diff": finite difference of poses
    velocity_source: str = "sensor"
    id_prefix: str = "V"


class Sensor:
    """Track-level sensor that tags each vehicle with a stable opaque visual ID."""

    def __init__(self, cfg: SensorConfig, rng: np.random.Generator, fixed_ids: list[Optional[str]]):
        self.cfg = cfg
        self.rng = rng
        self.ids: list[str] = []
        order = rng.permutation(len(fixed_ids))
        taken = {v for v in fixed_ids if v}
        counter = 1
        ids: list[Optional[str]] = list(fixed_ids)
        for idx in order:
            if ids[idx]:
                continue
            while f"{cfg.id_prefix}{counter}" in taken:
                counter += 1
            ids[idx] = f"{cfg.id_prefix}{counter}"
            taken.add(ids[idx])
        self.ids = [str(v) for v in ids]
        self._prev: list[Optional[tuple[float, float, float, int]]] = [None] * len(fixed_ids)

    def prime(self, states: list[VehicleState], t_us: int) -> None:
        """Record poses without emitting (used for pose differencing at t=0)."""
        for i, s in enumerate(states):
            self._prev[i] = (s.x, s.y, s.theta, t_us)

    def __call__(self, states: list[VehicleState], t_us: int) -> list[Observation]:
        cfg = self.cfg
        out = []
        for i, s in enumerate(states):
            nx, ny, nth, nv, nw = self.rng.standard_normal(5)
            x = s.x + cfg.position_noise_std * float(nx)
            y = s.y + cfg.position_noise_std * float(ny)
            theta = wrap_angle(s.theta + cfg.heading_noise_std * float(nth))
            if cfg.velocity_source == "pose_diff" and self._prev[i] is not None:
                px, py, pth, pt = self._prev[i]
                dt = (t_us - pt) / 1e6
                v = ((x - px) * math.cos(pth) + (y - py) * math.sin(pth)) / dt
                omega = wrap_angle(theta - pth) / dt
            else:
                v = s.v + cfg.velocity_noise_std * float(nv)
                omega = s.omega + cfg.omega_noise_std * float(nw)
            self._prev[i] = (x, y, theta, t_us)
            out.append(Observation(t_us, self.ids[i], x, y, theta, v, omega))
        return out


def sense(states, cfg: SensorConfig, rng, t_us: int, ids: list[Optional[str]] | None = None) -> list[Observation]:
    """One-shot sensing helper; stateful runs should hold a :class:`Sensor`."""
    sensor = Sensor(cfg, rng, ids or [None] * len(states))
    return sensor(states, t_us)


@dataclass(frozen=True)
class VehicleConfig:
    name: str
    path: str
    target_speed: float
    address: Optional[str] = None
    visual_id: Optional[str] = None
    watermark: Optional[WatermarkConfig] = None
    noise: NoiseConfig = NoiseConfig()
    controller: str = "pursuit"
    leader: Optional[str] = None
    gap: float = 2.0
    gap_gain: float = 0.5
    lookahead: float = 0.5
    start_s: float = 0.0
    initial: Optional[tuple[float, float, float]] = None

    @property
    def transmits(self) -> bool:
        return self.address is not None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    dt: float
    duration: float
    seed: int
    paths: dict = field(default_factory=dict)
    vehicles: tuple = ()
    sensor: SensorConfig = SensorConfig()
    v_max: float = 30.0
    omega_max: float = 3.0

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def sensor_every(self) -> int:
        return int(round(1.0 / (self.sensor.rate * self.dt)))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def validate(self) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise ConfigError(f"duration must be non-negative, got {self.duration!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.sensor.rate <= 0 or self.sensor.rate > 1.0 / self.dt * (1 + 1e-9):
            raise ConfigError("sensor rate must be positive and not exceed the control rate 1/dt")
        ratio = 1.0 / (self.sensor.rate * self.dt)
        if abs(ratio - round(ratio)) > 1e-6:
            raise ConfigError("sensor period must be an integer multiple of dt")
        if self.sensor.velocity_source not in ("sensor", "pose_diff"):
            raise ConfigError(f"unknown velocity_source {self.sensor.velocity_source!r}")
        for name in ("position_noise_std", "heading_noise_std", "velocity_noise_std", "omega_noise_std"):
            if getattr(self.sensor, name) < 0:
                raise ConfigError(f"sensor {name} must be non-negative")
        names, addresses, vids = set(), set(), set()
        for v in self.vehicles:
            if v.name in names:
                raise ConfigError(f"duplicate vehicle name {v.name!r}")
            names.add(v.name)
            if v.address is not None:
                if v.address in addresses:
                    raise ConfigError(f"duplicate address {v.address!r}")
                addresses.add(v.address)
            if v.visual_id is not None:
                if v.visual_id in vids:
                    raise ConfigError(f"duplicate visual_id {v.visual_id!r}")
                vids.add(v.visual_id)
            if v.path not in self.paths:
                raise ConfigError(f"vehicle {v.name!r} references unknown path {v.path!r}")
            if v.controller not in ("pursuit", "follow"):
                raise ConfigError(f"vehicle {v.name!r}: unknown controller {v.controller!r}")
            if v.controller == "follow" and v.leader is None:
                raise ConfigError(f"vehicle {v.name!r}: follow controller needs a leader")
            if v.watermark is not None:
                v.watermark.validate()
            v.noise.validate()
        for v in self.vehicles:
            if v.leader is not None and (v.leader not in names or v.leader == v.name):
                raise ConfigError(f"vehicle {v.name!r}: bad leader {v.leader!r}")


@dataclass
class VehicleLog:
    """Per-tick ground-truth record for one vehicle (index k = control tick)."""

    u_g_v: list = field(default_factory=list)
    u_g_omega: list = field(default_factory=list)
    e_v: list = field(default_factory=list)
    e_omega: list = field(default_factory=list)
    v: list = field(default_factory=list)
    omega: list = field(default_factory=list)
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    lateral: list = field(default_factory=list)

    def w_v(self) -> np.ndarray:
        return np.asarray(self.v) - np.asarray(self.u_g_v) - np.asarray(self.e_v)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    observations: list[Observation]
    packets: list[ReceivedPacket]
    ground_truth: dict[str, str]
    watermark_samples: dict[str, list[ExcitationSample]]
    logs: dict[str, VehicleLog]


def _seed_seq(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, *key])


def derived_watermark_seed(seed: int, index: int) -> int:
    return int(_seed_seq(seed, index, 0).generate_state(1, np.uint64)[0])


def tick_time_us(k: int, dt: float) -> int:
    return int(round(k * dt * 1e6))


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Closed loop per control tick: policy input, watermark draw, injection, kinematic step.

    Each transmitting vehicle emits one packet per tick, stamped with the
    start-of-tick time. The sensor fires at the end of every
    ``sensor_every``-th step, reporting the velocity realised over that step.
    """
    cfg.validate()
    vehicles = list(cfg.vehicles)
    index = {v.name: i for i, v in enumerate(vehicles)}
    controllers = [PursuitController(v.lookahead, cfg.v_max, cfg.omega_max) for v in vehicles]
    paths = cfg.paths

    generators: list[Optional[WatermarkGenerator]] = []
    for i, v in enumerate(vehicles):
        if v.watermark is None:
            generators.append(None)
        else:
            wm = v.watermark
            if wm.seed is None:
                wm = replace(wm, seed=derived_watermark_seed(cfg.seed, i))
            generators.append(WatermarkGenerator(wm))
    noise_rngs = [np.random.Generator(np.random.PCG64(_seed_seq(cfg.seed, i, 1))) for i in range(len(vehicles))]
    sensor = Sensor(
        cfg.sensor,
        np.random.Generator(np.random.PCG64(_seed_seq(cfg.seed, 2**31 - 1, 2))),
        [v.visual_id for v in vehicles],
    )

    states = []
    for v in vehicles:
        if v.initial is not None:
            x, y, th = v.initial
        else:
            x, y, th = paths[v.path].pose_at(v.start_s)
        # vehicles start already rolling at their target speed
        states.append(VehicleState(x, y, wrap_angle(th), v=v.target_speed))

    logs = {v.name: VehicleLog() for v in vehicles}
    samples: dict[str, list[ExcitationSample]] = {v.name: [] for v in vehicles if generators[index[v.name]]}
    observations: list[Observation] = []
    packets: list[ReceivedPacket] = []
    sensor.prime(states, 0)
    every = cfg.sensor_every

    for k in range(cfg.n_ticks):
        t_us = tick_time_us(k, cfg.dt)
        new_states = []
        for i, v in enumerate(vehicles):
            s = states[i]
            path = paths[v.path]
            if v.controller == "follow":
                lead = states[index[v.leader]]
                s_self, _ = path.project(s.x, s.y)
                s_lead, _ = path.project(lead.x, lead.y)
                target = lead.v + v.gap_gain * ((s_lead - s_self) - v.gap)
                u_g_v, u_g_omega = controllers[i](s, path, target)
            else:
                u_g_v, u_g_omega = controllers[i](s, path, v.target_speed)
            gen = generators[i]
            e = gen.draw() if gen is not None else ExcitationSample(k, 0.0, 0.0)
            u_v, u_omega = inject(u_g_v, u_g_omega, e)
            ns = step_kinematics(s, u_v, u_omega, v.noise, noise_rngs[i], cfg.dt)
            new_states.append(ns)
            if gen is not None:
                samples[v.name].append(e)
            if v.transmits:
                packets.append(
                    ReceivedPacket(
                        v.address,
                        WatermarkPacket(seq=k, timestamp_us=t_us, u_g_v=u_g_v, u_g_omega=u_g_omega,
                                        e_v=e.e_v, e_omega=e.e_omega),
                    )
                )
            log = logs[v.name]
            log.u_g_v.append(u_g_v)
            log.u_g_omega.append(u_g_omega)
            log.e_v.append(e.e_v)
            log.e_omega.append(e.e_omega)
            log.v.append(ns.v)
            log.omega.append(ns.omega)
            log.x.append(ns.x)
            log.y.append(ns.y)
            log.theta.append(ns.theta)
            log.lateral.append(path.project(ns.x, ns.y)[1])
        states = new_states
        if (k + 1) % every == 0:
            batch = sensor(states, tick_time_us(k + 1, cfg.dt))
            observations.extend(sorted(batch, key=lambda o: o.visual_id))

    # a vehicle only has a visual ID once the sensor has seen it
    seen = {o.visual_id for o in observations}
    truth = {v.address: sensor.ids[i] for i, v in enumerate(vehicles) if v.transmits and sensor.ids[i] in seen}
    return ScenarioResult(cfg, observations, packets, truth, samples, logs)
