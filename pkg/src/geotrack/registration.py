"""Masked cosine-similarity registration of ground and aerial grid-maps.

For each rotation hypothesis the ground cloud is rasterized once; all pixel
translations are then scored at once with FFT cross-correlations::

    numerator(s)   = sum_c  (A_c  corr  G_c)(s)     unit features, masked
    overlap(s)     = (mask_A corr mask_G)(s)        = |X(h)|
    score(s)       = numerator(s) / overlap(s)

A translation ``(dx, dy)`` in pixels moves the ground map ``dx`` columns right
and ``dy`` rows down, i.e. by ``(dx * q, -dy * q)`` meters in the grid frame.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .geodesy import Pose2
from .projection import GridSpec, PointCloud, PointFeatures, SparseGridMap, rasterize

NORM_EPS = 1e-12


class NoFixError(RuntimeError):
    """No hypothesis survived overlap gating."""


def default_rotations() -> np.ndarray:
    """21 angles in [-8, 8] degrees, denser near zero (radians)."""
    half = np.array([0.1875, 0.375, 0.625, 1.0, 1.5, 2.25, 3.25, 4.5, 6.0, 8.0])
    return np.radians(np.concatenate([-half[::-1], [0.0], half]))


@dataclass
class HypothesisGrid:
    rotations: np.ndarray
    max_shift_x: int
    max_shift_y: int
    alpha: float = 0.6

    def __post_init__(self):
        self.rotations = np.atleast_1d(np.asarray(self.rotations, dtype=float))
        if self.rotations.size == 0:
            raise ValueError("at least one rotation hypothesis is required")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.max_shift_x < 0 or self.max_shift_y < 0:
            raise ValueError("shift ranges must be non-negative")

    @property
    def dxs(self) -> np.ndarray:
        return np.arange(-self.max_shift_x, self.max_shift_x + 1)

    @property
    def dys(self) -> np.ndarray:
        return np.arange(-self.max_shift_y, self.max_shift_y + 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.rotations), 2 * self.max_shift_y + 1, 2 * self.max_shift_x + 1


@dataclass
class ConfidenceVolume:
    rotations: np.ndarray  # (R,) radians
    dys: np.ndarray  # (ny,)
    dxs: np.ndarray  # (nx,)
    scores: np.ndarray  # (R, ny, nx), NaN where invalid
    overlap: np.ndarray  # (R, ny, nx) int
    valid: np.ndarray  # (R, ny, nx) bool
    ground_count: np.ndarray  # (R,) valid ground pixels per rotation
    resolution: float = 1.0

    @property
    def empty(self) -> bool:
        return not self.valid.any()

    def hypothesis_poses(self) -> np.ndarray:
        """(R, ny, nx, 3) metric ``(x, y, phi)`` of every hypothesis."""
        r, y, x = np.meshgrid(self.rotations, self.dys, self.dxs, indexing="ij")
        return np.stack([x * self.resolution, -y * self.resolution, r], axis=-1)


def cosine_similarity(a, g) -> float:
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    na, ng = np.linalg.norm(a), np.linalg.norm(g)
    if na <= NORM_EPS or ng <= NORM_EPS:
        raise ValueError("cosine similarity of a zero-norm vector")
    return float(np.clip(a @ g / (na * ng), -1.0, 1.0))


def score_hypothesis(ma: SparseGridMap, mg: SparseGridMap):
    """Direct masked mean cosine similarity; returns ``(score or None, overlap)``."""
    if ma.features.shape != mg.features.shape:
        raise ValueError("grid-maps must share a spec")
    na = np.linalg.norm(ma.features, axis=-1)
    ng = np.linalg.norm(mg.features, axis=-1)
    x = ma.valid & mg.valid & (na > NORM_EPS) & (ng > NORM_EPS)
    n = int(x.sum())
    if n == 0:
        return None, 0
    a = ma.features[x] / na[x, None]
    g = mg.features[x] / ng[x, None]
    return float(np.sum(a * g) / n), n


def shift_map(m: SparseGridMap, dy: int, dx: int) -> SparseGridMap:
    """Translate a grid-map by whole pixels; uncovered pixels become invalid."""
    h, w = m.valid.shape
    feats = np.zeros_like(m.features)
    valid = np.zeros_like(m.valid)
    src_r = slice(max(0, -dy), min(h, h - dy))
    dst_r = slice(max(0, dy), min(h, h + dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_c = slice(max(0, dx), min(w, w + dx))
    if src_r.start < src_r.stop and src_c.start < src_c.stop:
        feats[dst_r, dst_c] = m.features[src_r, src_c]
        valid[dst_r, dst_c] = m.valid[src_r, src_c]
    return SparseGridMap(m.spec, feats, valid)


def valid_ground_pixels(mg: SparseGridMap) -> int:
    return int((mg.valid & (np.linalg.norm(mg.features, axis=-1) > NORM_EPS)).sum())


def correlate_direct(ma: SparseGridMap, ground_maps, grid: HypothesisGrid) -> ConfidenceVolume:
    """Brute-force reference: :func:`score_hypothesis` at every shift of every rotation's map."""
    shape = grid.shape
    scores = np.full(shape, np.nan)
    overlap = np.zeros(shape, dtype=np.int64)
    valid = np.zeros(shape, dtype=bool)
    counts = np.zeros(len(grid.rotations), dtype=np.int64)
    for r, mg in enumerate(ground_maps):
        counts[r] = valid_ground_pixels(mg)
        for i, dy in enumerate(grid.dys):
            for j, dx in enumerate(grid.dxs):
                s, n = score_hypothesis(ma, shift_map(mg, int(dy), int(dx)))
                overlap[r, i, j] = n
                if s is not None and counts[r] > 0 and n >= grid.alpha * counts[r]:
                    scores[r, i, j] = s
                    valid[r, i, j] = True
    return ConfidenceVolume(grid.rotations.copy(), grid.dys, grid.dxs, scores, overlap, valid, counts,
                            ma.spec.resolution)


def _unit_features(m: SparseGridMap):
    norm = np.linalg.norm(m.features, axis=-1)
    mask = m.valid & (norm > NORM_EPS)
    unit = np.zeros_like(m.features)
    unit[mask] = m.features[mask] / norm[mask, None]
    return unit, mask.astype(float)


class _AerialSpectrum:
    """Cached transforms of the aerial map for a fixed shift range."""

    def __init__(self, ma: SparseGridMap, grid: HypothesisGrid):
        h, w = ma.valid.shape
        self.fft_shape = (sfft.next_fast_len(h + grid.max_shift_y, real=True),
                          sfft.next_fast_len(w + grid.max_shift_x, real=True))
        unit, mask = _unit_features(ma)
        self.features = sfft.rfft2(unit, s=self.fft_shape, axes=(0, 1))
        self.mask = sfft.rfft2(mask, s=self.fft_shape)
        self.rows = np.mod(grid.dys, self.fft_shape[0])
        self.cols = np.mod(grid.dxs, self.fft_shape[1])

    def correlate(self, mg: SparseGridMap):
        unit, mask = _unit_features(mg)
        fg = sfft.rfft2(unit, s=self.fft_shape, axes=(0, 1))
        num = sfft.irfft2(np.einsum("ijc,ijc->ij", self.features, fg.conj()), s=self.fft_shape)
        den = sfft.irfft2(self.mask * sfft.rfft2(mask, s=self.fft_shape).conj(), s=self.fft_shape)
        sel = np.ix_(self.rows, self.cols)
        return num[sel], np.rint(den[sel]).astype(np.int64), int(mask.sum())


def _gate(num, overlap, count, alpha):
    valid = (overlap > 0) & (count > 0)
    if count > 0:
        valid &= overlap >= alpha * count
    scores = np.full(num.shape, np.nan)
    scores[valid] = np.clip(num[valid] / overlap[valid], -1.0, 1.0)
    return scores, valid


def correlate_maps(ma: SparseGridMap, ground_maps, grid: HypothesisGrid, workers: int = 1) -> ConfidenceVolume:
    """FFT scoring of pre-rasterized ground maps (one per rotation)."""
    if len(ground_maps) != len(grid.rotations):
        raise ValueError("need one ground map per rotation hypothesis")
    spectrum = _AerialSpectrum(ma, grid)
    return _assemble(grid, ma.spec.resolution, ground_maps, spectrum.correlate, workers)


def correlate(
    ma: SparseGridMap,
    pf: PointFeatures,
    cloud: PointCloud,
    grid: HypothesisGrid,
    spec: GridSpec,
    workers: int = 1,
) -> ConfidenceVolume:
    """Score every (rotation, translation) hypothesis of the ground cloud against ``ma``."""
    spectrum = _AerialSpectrum(ma, grid)

    def one(angle):
        return spectrum.correlate(rasterize(pf, cloud, Pose2(angle), spec))

    return _assemble(grid, spec.resolution, grid.rotations, one, workers)


def _assemble(grid, resolution, items, fn, workers):
    shape = grid.shape
    scores = np.full(shape, np.nan)
    overlap = np.zeros(shape, dtype=np.int64)
    valid = np.zeros(shape, dtype=bool)
    counts = np.zeros(shape[0], dtype=np.int64)

    def plane(r):
        num, ov, count = fn(items[r])
        scores[r], valid[r] = _gate(num, ov, count, grid.alpha)
        overlap[r] = ov
        counts[r] = count

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(plane, range(shape[0])))
    else:
        for r in range(shape[0]):
            plane(r)
    return ConfidenceVolume(grid.rotations.copy(), grid.dys, grid.dxs, scores, overlap, valid, counts, resolution)


def best_hypothesis(vol: ConfidenceVolume):
    """Argmax over valid hypotheses as ``(rotation, (dx, dy), score)``.

    Ties resolve to the smallest ``(rotation index, dy, dx)``.
    """
    if vol.empty:
        raise NoFixError("no hypothesis passed overlap gating")
    masked = np.where(vol.valid, vol.scores, -np.inf)
    r, i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
    return float(vol.rotations[r]), (int(vol.dxs[j]), int(vol.dys[i])), float(vol.scores[r, i, j])


def hypothesis_pose(angle: float, dx: int, dy: int, resolution: float) -> Pose2:
    """Metric relative pose T_{G->A} of a grid hypothesis."""
    return Pose2(angle, dx * resolution, -dy * resolution)


def rotation_schedule(count: int, max_deg: float) -> np.ndarray:
    """Symmetric rotation set with density increasing toward zero (radians).

    The 21-angle, 8-degree case returns :func:`default_rotations`; other
    sizes use a quadratic spacing ``max * (k / K)**2``.
    """
    if count == 21 and math.isclose(max_deg, 8.0):
        return default_rotations()
    if count < 1 or count % 2 == 0:
        raise ValueError("rotation count must be odd and positive")
    k = (count - 1) // 2
    if k == 0:
        return np.zeros(1)
    half = max_deg * (np.arange(1, k + 1) / k) ** 2
    return np.radians(np.concatenate([-half[::-1], [0.0], half]))
