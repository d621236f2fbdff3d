"""Flat ``key = value`` configuration with dotted namespaces.

Example::

    # tracker tuning
    ekf.sigma_a = 0.1
    registration.alpha = 0.6
    world.seed = 7

Every key maps onto a field of one of the dataclasses below; values are
coerced to the type of the field's default.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .loss import LossConfig


class ConfigError(ValueError):
    pass


def parse_key_values(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


@dataclass
class WorldConfig:
    seed: int = 0
    duration: float = 300.0  # s
    imu_rate: float = 100.0  # Hz
    speed: float = 8.0  # m/s, cruise speed along the loop
    loop_length: float = 120.0  # m, straight section of the circuit
    loop_radius: float = 30.0  # m, turn radius
    channels: int = 32  # c, feature embedding dimension
    texture_sigma: float = 1.5  # px, smoothing of the aerial feature field
    margin: float = 40.0  # m of texture around the trajectory
    feature_sigma: float = 0.1  # per-channel perturbation of ground features
    corruption_rate: float = 0.0  # fraction of camera pixels with unrelated features
    sigma_a: float = 0.1  # m/s^2 IMU acceleration noise (std per sample)
    sigma_omega: float = 0.01  # rad/s IMU turn-rate noise (std per sample)
    lidar_height: float = 1.8
    lidar_beams: int = 16
    lidar_min_elevation: float = -25.0  # deg
    lidar_max_elevation: float = -6.0  # deg
    lidar_azimuth_step: float = 0.5  # deg
    lidar_range: float = 15.0
    lidar_dropout: float = 0.0
    camera_width: int = 192
    camera_height: int = 144
    camera_count: int = 4
    camera_fov: float = 100.0  # deg, horizontal
    camera_pitch: float = 20.0  # deg down
    camera_height_m: float = 1.6
    tile_size: int = 128  # px, texture generation tile


@dataclass
class RegistrationConfig:
    resolution: float = 0.2  # q, m/px
    aerial_size: int = 512  # h_A = w_A, px
    grid_size: int = 0  # h_M = w_M; 0 -> aerial_size + 2 * max_shift
    max_shift: int = 12  # px, translation hypotheses |dx|, |dy|
    alpha: float = 0.6  # inference overlap threshold
    alpha_train: float = 0.3
    rotation_count: int = 21
    rotation_range: float = 8.0  # deg
    aerial_center_shift: float = 0.4  # fraction of h_A, bound of the random tile offset
    randomize_aerial_center: bool = False  # apply the offset (a training-style perturbation)
    period: float = 1.0  # s between registrations
    enabled: bool = True
    workers: int = 1


@dataclass
class EkfConfig:
    sigma_a: float = 0.1  # filter's assumed acceleration noise (std per sample)
    sigma_omega: float = 0.01
    initial_sigma_xy: float = 0.1
    initial_sigma_yaw: float = 0.005
    initial_sigma_v: float = 0.1


@dataclass
class GateConfig:
    max_variance: float = 4.0  # m^2, translational variance tau_var
    min_score: float = 0.05
    max_mahalanobis: float = 3.0
    floor_yaw_deg: float = 0.25


@dataclass
class PipelineConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    ekf: EkfConfig = field(default_factory=EkfConfig)
    gate: GateConfig = field(default_factory=GateConfig)

    def items(self):
        """Yield ``(dotted_key, value)`` for every setting."""
        for section in dataclasses.fields(self):
            sub = getattr(self, section.name)
            for f in dataclasses.fields(sub):
                yield f"{section.name}.{f.name}", getattr(sub, f.name)

    def echo(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.items())

    def set(self, key: str, value: str) -> None:
        section, _, name = key.partition(".")
        sub = getattr(self, section, None)
        if sub is None or not dataclasses.is_dataclass(sub) or name not in {f.name for f in dataclasses.fields(sub)}:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(sub, name)
        setattr(sub, name, _coerce(key, value, type(current)))


def _coerce(key, value, kind):
    if not isinstance(value, str):
        return kind(value)
    try:
        if kind is bool:
            lowered = value.lower()
            if lowered not in {"true", "false", "1", "0", "yes", "no"}:
                raise ValueError(value)
            return lowered in {"true", "1", "yes"}
        if kind is int:
            return int(value)
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None


def load_config(path=None, overrides=None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        for key, value in parse_key_values(Path(path).read_text(encoding="utf-8")).items():
            cfg.set(key, value)
    for key, value in (overrides or {}).items():
        cfg.set(key, value)
    return cfg
