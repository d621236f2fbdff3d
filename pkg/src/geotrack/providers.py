"""Feature providers standing in for the aerial and ground networks.

A ground provider returns the feature map of camera ``slot`` at a timestamp;
an aerial provider returns the features of an aerial tile laid out on grid
pixels of a given spec, in the frame of a prior pose.
"""
from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np

from .formats import read_feature_map
from .geodesy import Pose2
from .projection import CameraModel, FeatureMap, GridSpec
from .world import SyntheticWorld


class GroundFeatureProvider(Protocol):
    def ground_features(self, slot: int, timestamp: float) -> FeatureMap: ...


class AerialFeatureProvider(Protocol):
    def aerial_features(self, pose: Pose2, spec: GridSpec, size: int, offset=(0, 0)) -> FeatureMap: ...


class FileGroundProvider:
    """Precomputed FGMAP1 maps named ``<prefix><step>_<slot>.fgmap`` in a directory."""

    def __init__(self, directory, rate: float, prefix: str = "ground_", channels: int | None = None):
        self.directory = Path(directory)
        self.rate = rate
        self.prefix = prefix
        self.channels = channels

    def path(self, slot: int, timestamp: float) -> Path:
        return self.directory / f"{self.prefix}{int(round(timestamp * self.rate))}_{slot}.fgmap"

    def ground_features(self, slot, timestamp):
        fmap = read_feature_map(self.path(slot, timestamp))
        if self.channels is not None and fmap.channels != self.channels:
            raise ValueError(f"{self.path(slot, timestamp)} has {fmap.channels} channels, expected {self.channels}")
        return fmap


class FileAerialProvider:
    """A single precomputed aerial tile, already centered on the prior pose."""

    def __init__(self, path):
        self.fmap = read_feature_map(path)

    def aerial_features(self, pose, spec, size, offset=(0, 0)):
        if (self.fmap.height, self.fmap.width) != (size, size):
            raise ValueError(f"aerial file is {self.fmap.height}x{self.fmap.width}, expected {size}x{size}")
        return self.fmap


def tile_window(spec: GridSpec, size: int, offset=(0, 0)):
    top = (spec.height - size) // 2 + int(offset[0])
    left = (spec.width - size) // 2 + int(offset[1])
    return slice(top, top + size), slice(left, left + size)


class SyntheticAerialProvider:
    """Samples the world texture on the aerial tile's pixel centers."""

    def __init__(self, world: SyntheticWorld):
        self.world = world

    def aerial_features(self, pose, spec, size, offset=(0, 0)):
        rows, cols = tile_window(spec, size, offset)
        centers = spec.pixel_centers()[rows, cols].reshape(-1, 2)
        feats = self.world.sample_texture(pose.apply(centers))
        return FeatureMap(feats.reshape(size, size, -1))


class SyntheticGroundProvider:
    """Renders camera feature maps by ray casting onto the flat textured ground.

    Each pixel holds the texture at its ray's ground intersection plus
    Gaussian noise of std ``feature_sigma``; a ``corruption_rate`` fraction of
    pixels is replaced by unrelated unit vectors. Rays that miss the ground
    carry zero features.
    """

    def __init__(self, world: SyntheticWorld, feature_sigma: float | None = None,
                 corruption_rate: float | None = None):
        self.world = world
        cfg = world.config
        self.feature_sigma = cfg.feature_sigma if feature_sigma is None else feature_sigma
        self.corruption_rate = cfg.corruption_rate if corruption_rate is None else corruption_rate
        self._rays = [self._ground_hits(cam) for cam in world.cameras]

    @staticmethod
    def _ground_hits(cam: CameraModel):
        u, v = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
        d_cam = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u, dtype=float)], axis=-1)
        rot = cam.extrinsics[:3, :3]
        origin = -rot.T @ cam.extrinsics[:3, 3]
        d_veh = d_cam.reshape(-1, 3) @ rot
        hit = d_veh[:, 2] < -1e-9
        pts = np.zeros((len(d_veh), 2))
        t = -origin[2] / d_veh[hit, 2]
        pts[hit] = origin[:2] + t[:, None] * d_veh[hit, :2]
        return pts, hit

    def _step(self, timestamp: float) -> int:
        k = int(np.searchsorted(self.world.times, timestamp - 1e-9))
        return min(k, len(self.world.times) - 1)

    def ground_features(self, slot, timestamp):
        world = self.world
        k = self._step(timestamp)
        cam = world.cameras[slot]
        pts, hit = self._rays[slot]
        feats = np.zeros((len(pts), world.texture.shape[2]))
        feats[hit] = world.sample_texture(world.pose_at(k).apply(pts[hit]))
        rng = np.random.default_rng([world.config.seed, 4, k, slot])
        if self.feature_sigma > 0:
            feats[hit] += self.feature_sigma * rng.standard_normal((int(hit.sum()), feats.shape[1]))
        if self.corruption_rate > 0:
            bad = hit & (rng.random(len(pts)) < self.corruption_rate)
            junk = rng.standard_normal((int(bad.sum()), feats.shape[1]))
            feats[bad] = junk / np.linalg.norm(junk, axis=1, keepdims=True)
        return FeatureMap(feats.reshape(cam.height, cam.width, -1))
