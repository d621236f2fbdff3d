"""Seeded synthetic worlds: a feature texture on flat ground, a looped CTRA
trajectory with IMU samples, a ring-pattern lidar and a camera rig."""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .config import ConfigError, PipelineConfig, WorldConfig
from .geodesy import Pose2
from .projection import CameraModel, GridSpec, PointCloud, bilinear_sample
from .tracking import ImuSample, ctra_motion


@dataclass
class SyntheticWorld:
    config: WorldConfig
    resolution: float
    texture: np.ndarray  # (h, w, c) float32, unit vectors per pixel
    texture_spec: GridSpec
    times: np.ndarray  # (n + 1,) truth timestamps, times[0] = 0
    truth: np.ndarray  # (n + 1, 6) x, y, phi, v, a, omega
    controls: np.ndarray  # (n, 2) true (a, omega) over each IMU interval
    imu_measured: np.ndarray  # (n, 2) noisy (a, omega)
    base_cloud: np.ndarray  # (m, 3) lidar pattern, vehicle frame
    cameras: list

    @property
    def imu(self) -> list[ImuSample]:
        cfg = self.config
        return [
            ImuSample(float(t), float(w), float(a), cfg.sigma_omega, cfg.sigma_a)
            for t, (a, w) in zip(self.times[1:], self.imu_measured)
        ]

    def pose_at(self, k: int) -> Pose2:
        x, y, phi = self.truth[k, :3]
        return Pose2(phi, x, y)

    def scan(self, k: int) -> PointCloud:
        """Lidar scan at truth step ``k`` with per-scan seeded dropout."""
        rate = self.config.lidar_dropout
        if rate <= 0:
            return PointCloud(self.base_cloud)
        rng = np.random.default_rng([self.config.seed, 1, k])
        keep = rng.random(len(self.base_cloud)) >= rate
        return PointCloud(self.base_cloud[keep])

    def sample_texture(self, xy) -> np.ndarray:
        """Bilinear texture lookup at world points (n, 2); clamps at the border."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        s = self.texture_spec
        uv = np.stack([(xy[:, 0] - s.origin_x) / s.resolution, (s.origin_y - xy[:, 1]) / s.resolution], axis=1)
        uv[:, 0] = np.clip(uv[:, 0], 0, s.width - 1)
        uv[:, 1] = np.clip(uv[:, 1], 0, s.height - 1)
        return bilinear_sample(self.texture, uv)

    def to_bytes(self) -> bytes:
        """Canonical serialization, used for determinism checks."""
        parts = [self.texture, self.times, self.truth, self.controls, self.imu_measured, self.base_cloud]
        parts += [np.concatenate([[c.fx, c.fy, c.cx, c.cy, c.width, c.height], c.extrinsics.ravel()]) for c in self.cameras]
        return b"".join(np.ascontiguousarray(p).astype("<f8").tobytes() for p in parts)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _controls(cfg: WorldConfig, rng: np.random.Generator, n: int, dt: float) -> np.ndarray:
    """Piecewise-constant (a, omega) following a stadium-shaped loop."""
    straight = cfg.loop_length * (1 + 0.1 * rng.uniform(-1, 1))
    radius = cfg.loop_radius * (1 + 0.1 * rng.uniform(-1, 1))
    amp = cfg.speed * 0.15 * rng.uniform(0.5, 1.0)
    period = rng.uniform(20.0, 40.0)
    phase = rng.uniform(0, 2 * math.pi)
    lap = 2 * straight + 2 * math.pi * radius
    t = np.arange(n + 1) * dt
    speed = cfg.speed + amp * np.sin(2 * math.pi * t / period + phase)
    accel = np.diff(speed) / dt
    out = np.zeros((n, 2))
    v = speed[0]
    s = 0.0
    for k in range(n):
        a = accel[k]
        ds = v * dt + 0.5 * a * dt**2
        # curvature at the midpoint of the step's arc
        u = (s + 0.5 * ds) % lap
        turning = straight <= u < straight + math.pi * radius or u >= 2 * straight + math.pi * radius
        omega = (v + 0.5 * a * dt) / radius if turning else 0.0
        out[k] = a, omega
        s += ds
        v += a * dt
    return out, speed[0]


def _texture(cfg: WorldConfig, spec: GridSpec, workers: int = 1) -> np.ndarray:
    """Smoothed Gaussian noise, unit-normalized per pixel.

    Noise is drawn per tile from a seed derived from the tile index, so the
    result does not depend on the generation schedule.
    """
    h, w, c, tile = spec.height, spec.width, cfg.channels, cfg.tile_size
    noise = np.empty((h, w, c))
    tiles = [(r, q) for r in range(0, h, tile) for q in range(0, w, tile)]

    def fill(rc):
        r, q = rc
        rng = np.random.default_rng([cfg.seed, 2, r // tile, q // tile])
        block = noise[r : r + tile, q : q + tile]
        block[...] = rng.standard_normal(block.shape)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, tiles))
    else:
        for rc in tiles:
            fill(rc)
    smooth = gaussian_filter(noise, sigma=(cfg.texture_sigma, cfg.texture_sigma, 0), mode="reflect")
    smooth /= np.linalg.norm(smooth, axis=-1, keepdims=True)
    return smooth.astype(np.float32)


def lidar_pattern(cfg: WorldConfig) -> np.ndarray:
    """Ground returns of a spinning lidar over flat ground (vehicle frame, z = 0 ground)."""
    elev = np.radians(np.linspace(cfg.lidar_min_elevation, cfg.lidar_max_elevation, cfg.lidar_beams))
    elev = elev[elev < 0]
    ranges = cfg.lidar_height / np.tan(-elev)
    ranges = ranges[ranges <= cfg.lidar_range]
    az = np.radians(np.arange(0.0, 360.0, cfg.lidar_azimuth_step))
    rr, aa = np.meshgrid(ranges, az, indexing="ij")
    return np.stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel(), np.zeros(rr.size)], axis=1)


def camera_rig(cfg: WorldConfig) -> list[CameraModel]:
    fx = (cfg.camera_width / 2) / math.tan(math.radians(cfg.camera_fov) / 2)
    return [
        CameraModel.looking(
            2 * math.pi * i / cfg.camera_count,
            math.radians(cfg.camera_pitch),
            (0.0, 0.0, cfg.camera_height_m),
            fx, fx, cfg.camera_width, cfg.camera_height,
        )
        for i in range(cfg.camera_count)
    ]


def generate_world(config: PipelineConfig | WorldConfig, resolution: float | None = None,
                   workers: int = 1) -> SyntheticWorld:
    if isinstance(config, PipelineConfig):
        cfg = config.world
        resolution = config.registration.resolution if resolution is None else resolution
    else:
        cfg = config
        resolution = 0.2 if resolution is None else resolution
    if cfg.imu_rate <= 0 or cfg.duration <= 0:
        raise ConfigError("duration and imu_rate must be positive")
    dt = 1.0 / cfg.imu_rate
    n = int(round(cfg.duration * cfg.imu_rate))
    rng = np.random.default_rng([cfg.seed, 0])
    controls, v0 = _controls(cfg, rng, n, dt)

    truth = np.zeros((n + 1, 6))
    truth[0, 3] = v0
    for k in range(n):
        x, y, phi, v = truth[k, :4]
        a, w = controls[k]
        truth[k, 4:] = a, w
        truth[k + 1, :4] = ctra_motion(x, y, phi, v, a, w, dt)
    truth[n, 4:] = controls[-1]
    truth[:, 2] = np.pi - np.mod(np.pi - truth[:, 2], 2 * np.pi)
    times = np.arange(n + 1) * dt

    imu_rng = np.random.default_rng([cfg.seed, 3])
    noise = imu_rng.standard_normal((n, 2)) * [cfg.sigma_a, cfg.sigma_omega]
    measured = controls + noise

    lo = truth[:, :2].min(axis=0) - cfg.margin
    hi = truth[:, :2].max(axis=0) + cfg.margin
    width = int(math.ceil((hi[0] - lo[0]) / resolution)) + 1
    height = int(math.ceil((hi[1] - lo[1]) / resolution)) + 1
    spec = GridSpec(width, height, resolution, lo[0], hi[1])
    texture = _texture(cfg, spec, workers)
    return SyntheticWorld(cfg, resolution, texture, spec, times, truth, controls, measured,
                          lidar_pattern(cfg), camera_rig(cfg))


def check_coverage(world: SyntheticWorld, radius: float) -> None:
    """Raise if any truth pose comes closer than ``radius`` to the texture border."""
    s = world.texture_spec
    x_lo, x_hi = s.origin_x, s.origin_x + (s.width - 1) * s.resolution
    y_hi, y_lo = s.origin_y, s.origin_y - (s.height - 1) * s.resolution
    xy = world.truth[:, :2]
    if (xy[:, 0].min() - radius < x_lo or xy[:, 0].max() + radius > x_hi
            or xy[:, 1].min() - radius < y_lo or xy[:, 1].max() + radius > y_hi):
        raise ConfigError("trajectory plus sensor footprint escapes the texture; increase world.margin")
