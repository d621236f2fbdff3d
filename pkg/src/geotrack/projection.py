"""Transfer ground-image features onto lidar points and rasterize them.

Grid convention (shared with registration): a :class:`GridSpec` describes a
north-up raster over a 2-D metric frame. Column index grows with +x (east),
row index grows with -y (north decreases downwards). ``origin`` is the frame
point at the *center* of pixel (0, 0); a point ``(x, y)`` falls into pixel
``(floor((origin_y + q/2 - y) / q), floor((x - origin_x + q/2) / q))``.

Camera convention: pinhole, camera frame x right, y down, z forward. Pixel
centers sit at integer coordinates, so a point is in frustum iff its depth is
positive and ``0 <= u <= width - 1``, ``0 <= v <= height - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geodesy import Pose2


@dataclass
class FeatureMap:
    """Dense ``h x w x c`` per-pixel embedding."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or self.data.shape[2] == 0:
            raise ValueError(f"feature map must be h x w x c with c > 0, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature map contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: np.ndarray = field(default_factory=lambda: np.eye(4))  # vehicle -> camera

    def __post_init__(self):
        self.extrinsics = np.asarray(self.extrinsics, dtype=float)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.extrinsics.shape != (4, 4) or abs(np.linalg.det(self.extrinsics[:3, :3])) < 1e-9:
            raise ValueError("extrinsics must be an invertible 4x4 transform")

    @property
    def image_size(self) -> tuple[int, int]:
        return self.width, self.height

    @classmethod
    def looking(cls, yaw: float, pitch: float, position, fx, fy, width, height, cx=None, cy=None):
        """Build a camera at ``position`` (vehicle frame) facing ``yaw`` (left
        positive) and ``pitch`` (down positive)."""
        forward = np.array([np.cos(pitch) * np.cos(yaw), np.cos(pitch) * np.sin(yaw), -np.sin(pitch)])
        right = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])  # rows: camera axes in vehicle frame
        ext = np.eye(4)
        ext[:3, :3] = rot
        ext[:3, 3] = -rot @ np.asarray(position, dtype=float)
        cx = (width - 1) / 2 if cx is None else cx
        cy = (height - 1) / 2 if cy is None else cy
        return cls(fx, fy, cx, cy, width, height, ext)


@dataclass
class PointCloud:
    points: np.ndarray  # (n, 3) vehicle frame: x forward, y left, z up

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")

    def __len__(self):
        return len(self.points)


@dataclass
class PointFeatures:
    features: np.ndarray  # (n, c)
    valid: np.ndarray  # (n,) bool


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    resolution: float
    origin_x: float
    origin_y: float

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("grid resolution must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid must be non-empty")

    @classmethod
    def centered(cls, width: int, height: int, resolution: float, center=(0.0, 0.0)) -> "GridSpec":
        """Grid whose pixel ``(height // 2, width // 2)`` is centered on ``center``."""
        return cls(
            width,
            height,
            resolution,
            center[0] - (width // 2) * resolution,
            center[1] + (height // 2) * resolution,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def pixel_of(self, xy) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) integer pixel of frame points, possibly outside the grid."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        q = self.resolution
        col = np.floor((xy[:, 0] - self.origin_x + q / 2) / q).astype(np.int64)
        row = np.floor((self.origin_y + q / 2 - xy[:, 1]) / q).astype(np.int64)
        return row, col

    def pixel_centers(self) -> np.ndarray:
        """(h, w, 2) frame coordinates of all pixel centers."""
        q = self.resolution
        xs = self.origin_x + q * np.arange(self.width)
        ys = self.origin_y - q * np.arange(self.height)
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)


@dataclass
class SparseGridMap:
    spec: GridSpec
    features: np.ndarray  # (h, w, c)
    valid: np.ndarray  # (h, w) bool

    @property
    def channels(self) -> int:
        return self.features.shape[2]


def project_points(cloud: PointCloud, cam: CameraModel):
    """Project vehicle-frame points into ``cam``.

    Returns ``(uv, in_frustum)`` with ``uv`` of shape (n, 2) in pixels
    (column, row). ``uv`` is NaN for points with non-positive depth.
    """
    pts = cloud.points
    pc = pts @ cam.extrinsics[:3, :3].T + cam.extrinsics[:3, 3]
    z = pc[:, 2]
    in_front = z > 0
    uv = np.full((len(pts), 2), np.nan)
    zf = z[in_front]
    uv[in_front, 0] = cam.fx * pc[in_front, 0] / zf + cam.cx
    uv[in_front, 1] = cam.fy * pc[in_front, 1] / zf + cam.cy
    with np.errstate(invalid="ignore"):
        inside = (
            in_front
            & (uv[:, 0] >= 0)
            & (uv[:, 0] <= cam.width - 1)
            & (uv[:, 1] >= 0)
            & (uv[:, 1] <= cam.height - 1)
        )
    return uv, inside


def _bilinear_weights(uv, width, height):
    u, v = uv[:, 0], uv[:, 1]
    u0 = np.clip(np.floor(u).astype(np.int64), 0, max(width - 2, 0))
    v0 = np.clip(np.floor(v).astype(np.int64), 0, max(height - 2, 0))
    u1 = np.minimum(u0 + 1, width - 1)
    v1 = np.minimum(v0 + 1, height - 1)
    fu = (u - u0)[:, None]
    fv = (v - v0)[:, None]
    idx = [(v0, u0), (v0, u1), (v1, u0), (v1, u1)]
    w = [(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv]
    return idx, w


def bilinear_sample(data: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Sample an (h, w, c) array at (n, 2) sub-pixel (column, row) locations."""
    h, w = data.shape[:2]
    idx, wts = _bilinear_weights(np.asarray(uv, dtype=float), w, h)
    out = np.zeros((len(uv), data.shape[2]))
    for (r, c), wt in zip(idx, wts):
        out += wt * data[r, c]
    return out


def sample_point_features(maps, cams, cloud: PointCloud) -> PointFeatures:
    """Mean of the bilinearly sampled features over all cameras observing each point."""
    if len(maps) != len(cams):
        raise ValueError(f"{len(maps)} feature maps but {len(cams)} cameras")
    if not maps:
        raise ValueError("at least one camera is required")
    c = maps[0].channels
    total = np.zeros((len(cloud), c))
    count = np.zeros(len(cloud))
    for fmap, cam in zip(maps, cams):
        if fmap.channels != c:
            raise ValueError("feature maps disagree on channel count")
        if (fmap.width, fmap.height) != (cam.width, cam.height):
            raise ValueError("feature map size does not match camera image size")
        uv, inside = project_points(cloud, cam)
        if inside.any():
            total[inside] += bilinear_sample(fmap.data, uv[inside])
            count[inside] += 1
    valid = count > 0
    feats = np.zeros_like(total)
    feats[valid] = total[valid] / count[valid, None]
    return PointFeatures(feats, valid)


def sample_point_features_backward(grad_points, maps, cams, cloud: PointCloud):
    """Adjoint of :func:`sample_point_features`; returns one gradient array per camera map."""
    count = np.zeros(len(cloud))
    projections = []
    for cam in cams:
        uv, inside = project_points(cloud, cam)
        projections.append((uv, inside))
        count += inside
    grads = []
    for fmap, (uv, inside) in zip(maps, projections):
        g = np.zeros_like(fmap.data)
        if inside.any():
            gp = grad_points[inside] / count[inside, None]
            idx, wts = _bilinear_weights(uv[inside], fmap.width, fmap.height)
            for (r, c), wt in zip(idx, wts):
                np.add.at(g, (r, c), wt * gp)
        grads.append(g)
    return grads


def rasterize(
    pf: PointFeatures,
    cloud: PointCloud,
    pose: Pose2,
    spec: GridSpec,
    return_argmax: bool = False,
):
    """Max-pool point features into a nadir grid after transforming by ``pose``.

    Pooling is per channel. With ``return_argmax`` an (h, w, c) array of the
    contributing point index is returned too (-1 where invalid); ties go to
    the lowest point index.
    """
    c = pf.features.shape[1]
    feats = np.full((spec.height, spec.width, c), -np.inf)
    valid = np.zeros(spec.shape, dtype=bool)
    keep = np.flatnonzero(pf.valid)
    argmax = np.full((spec.height, spec.width, c), -1, dtype=np.int64) if return_argmax else None
    if keep.size:
        xy = pose.apply(cloud.points[keep, :2])
        row, col = spec.pixel_of(xy)
        inside = (row >= 0) & (row < spec.height) & (col >= 0) & (col < spec.width)
        keep, row, col = keep[inside], row[inside], col[inside]
    if keep.size:
        flat = row * spec.width + col
        f = pf.features[keep]
        pooled = feats.reshape(-1, c)
        np.maximum.at(pooled, flat, f)
        valid.reshape(-1)[flat] = True
        if return_argmax:
            # first point (lowest index) achieving the per-channel maximum
            am = argmax.reshape(-1, c)
            hit = f == pooled[flat]
            for ch in range(c):
                sel = hit[:, ch]
                cells, first = np.unique(flat[sel], return_index=True)
                am[cells, ch] = keep[sel][first]
    feats[~valid] = 0.0
    grid = SparseGridMap(spec, feats, valid)
    if return_argmax:
        return grid, argmax
    return grid


def rasterize_backward(grad_map: np.ndarray, argmax: np.ndarray, n_points: int) -> np.ndarray:
    """Route a grid-map gradient to the point features selected by max pooling."""
    c = grad_map.shape[2]
    grad = np.zeros((n_points, c))
    cells = argmax >= 0
    ch = np.broadcast_to(np.arange(c), argmax.shape)[cells]
    np.add.at(grad, (argmax[cells], ch), grad_map[cells])
    return grad


def pad_aerial(fa: FeatureMap, spec: GridSpec, offset=(0, 0)) -> SparseGridMap:
    """Place the aerial features centered in an ``spec``-sized map; border pixels are invalid.

    Odd size differences put the extra row/column at the bottom/right.
    ``offset`` (rows, cols) moves the aerial tile off center.
    """
    h, w = spec.shape
    if fa.height > h or fa.width > w:
        raise ValueError(f"grid {h}x{w} is smaller than aerial map {fa.height}x{fa.width}")
    top = (h - fa.height) // 2 + int(offset[0])
    left = (w - fa.width) // 2 + int(offset[1])
    if top < 0 or left < 0 or top + fa.height > h or left + fa.width > w:
        raise ValueError("aerial offset moves the tile outside the grid")
    feats = np.zeros((h, w, fa.channels))
    valid = np.zeros((h, w), dtype=bool)
    feats[top : top + fa.height, left : left + fa.width] = fa.data
    valid[top : top + fa.height, left : left + fa.width] = True
    return SparseGridMap(spec, feats, valid)
