"""Scenario configuration files.

Scenarios are TOML documents::

    [scenario]                # name, dt (s), duration (s), seed, v_max, omega_max
    [sensor]                  # rate (Hz), *_noise_std, velocity_source, id_prefix
    [paths.<name>]            # kind = "oval" | "straight" | "polyline" plus shape keys
    [[vehicles]]              # one table per vehicle

A vehicle without ``address`` does not transmit. ``watermark`` and ``noise``
are inline tables of variances. Bundled scenarios can be referred to by name.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path as FsPath

from .detector import NoiseConfig
from .errors import ConfigError
from .sim import Path, ScenarioConfig, SensorConfig, VehicleConfig, oval_path, straight_path
from .watermark import WatermarkConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["bundled_configs", "load_config", "parse_config", "resolve_config_path"]


def bundled_configs() -> list[str]:
    root = resources.files("wmatch") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_config_path(ref: str) -> FsPath:
    path = FsPath(ref)
    if path.exists():
        return path
    bundled = resources.files("wmatch") / "configs" / f"{ref}.toml"
    if bundled.is_file():
        return FsPath(str(bundled))
    raise ConfigError(f"no such config file or bundled scenario: {ref!r}")


def load_config(ref: str) -> ScenarioConfig:
    path = resolve_config_path(ref)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def _build_path(name: str, shape: dict) -> Path:
    kind = shape.get("kind")
    try:
        if kind == "oval":
            return oval_path(float(shape["half_length"]), float(shape["radius"]), float(shape.get("spacing", 0.05)))
        if kind == "straight":
            return straight_path(
                float(shape["length"]), float(shape.get("spacing", 1.0)),
                y=float(shape.get("y", 0.0)), x0=float(shape.get("x0", 0.0)),
            )
        if kind == "polyline":
            return Path(shape["points"], closed=bool(shape.get("closed", False)))
    except KeyError as exc:
        raise ConfigError(f"path {name!r} is missing key {exc.args[0]!r}") from None
    raise ConfigError(f"path {name!r} has unknown kind {kind!r}")


_VEHICLE_KEYS = {
    "name", "address", "visual_id", "path", "target_speed", "controller", "leader", "gap",
    "gap_gain", "lookahead", "start_s", "start_fraction", "initial", "watermark", "noise",
}


def _vehicle(raw: dict, paths: dict) -> VehicleConfig:
    unknown = set(raw) - _VEHICLE_KEYS
    if unknown:
        raise ConfigError(f"unknown vehicle keys: {sorted(unknown)}")
    for key in ("name", "path", "target_speed"):
        if key not in raw:
            raise ConfigError(f"vehicle is missing {key!r}")
    path = paths.get(raw["path"])
    if path is None:
        raise ConfigError(f"vehicle {raw['name']!r} references unknown path {raw['path']!r}")
    start_s = float(raw.get("start_s", 0.0))
    if "start_fraction" in raw:
        start_s = float(raw["start_fraction"]) * path.length
    wm = raw.get("watermark")
    watermark = None
    if wm is not None:
        watermark = WatermarkConfig(
            float(wm.get("sigma2_e_v", 0.0)),
            float(wm.get("sigma2_e_omega", 0.0)),
            None if wm.get("seed") is None else int(wm["seed"]),
        )
    noise_raw = raw.get("noise", {})
    initial = raw.get("initial")
    if initial is not None:
        if len(initial) != 3:
            raise ConfigError("initial must be [x, y, theta]")
        initial = tuple(float(v) for v in initial)
    return VehicleConfig(
        name=str(raw["name"]),
        path=str(raw["path"]),
        target_speed=float(raw["target_speed"]),
        address=None if raw.get("address") is None else str(raw["address"]),
        visual_id=None if raw.get("visual_id") is None else str(raw["visual_id"]),
        watermark=watermark,
        noise=NoiseConfig(float(noise_raw.get("sigma2_w_v", 0.0)), float(noise_raw.get("sigma2_w_omega", 0.0))),
        controller=str(raw.get("controller", "pursuit")),
        leader=raw.get("leader"),
        gap=float(raw.get("gap", 2.0)),
        gap_gain=float(raw.get("gap_gain", 0.5)),
        lookahead=float(raw.get("lookahead", 0.5)),
        start_s=start_s,
        initial=initial,
    )


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    try:
        sc = doc["scenario"]
        paths = {name: _build_path(name, shape) for name, shape in doc.get("paths", {}).items()}
        sensor = SensorConfig(**doc.get("sensor", {}))
        cfg = ScenarioConfig(
            name=str(sc.get("name", FsPath(source).stem)),
            dt=float(sc["dt"]),
            duration=float(sc["duration"]),
            seed=int(sc.get("seed", 0)),
            paths=paths,
            vehicles=tuple(_vehicle(v, paths) for v in doc.get("vehicles", [])),
            sensor=sensor,
            v_max=float(sc.get("v_max", 30.0)),
            omega_max=float(sc.get("omega_max", 3.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"{source}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from None
    cfg.validate()
    return cfg
