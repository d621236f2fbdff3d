import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geotrack.geodesy import Pose2
from geotrack.projection import FeatureMap, GridSpec, PointCloud, PointFeatures, SparseGridMap, pad_aerial, rasterize
from geotrack.registration import (ConfidenceVolume, HypothesisGrid, NoFixError, best_hypothesis, correlate,
                                   correlate_direct, correlate_maps, cosine_similarity, default_rotations,
                                   hypothesis_pose, rotation_schedule, score_hypothesis, shift_map)
from geotrack.selfcheck import random_correlation_instance, random_sparse_map


def dense_map(rng, h=24, w=24, c=4):
    return random_sparse_map(rng, h, w, c, 1.0)


def test_cosine_examples():
    a = np.array([0.3, -1.2, 2.0])
    assert cosine_similarity(a, a) == pytest.approx(1.0)
    assert cosine_similarity(a, -a) == pytest.approx(-1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    with pytest.raises(ValueError):
        cosine_similarity([0, 0], [1, 0])


def test_subset_of_aerial_scores_one(rng):
    ma = dense_map(rng)
    keep = rng.random(ma.valid.shape) < 0.3
    mg = SparseGridMap(ma.spec, ma.features * keep[..., None], keep)
    s, n = score_hypothesis(ma, mg)
    assert s == pytest.approx(1.0)
    assert n == keep.sum()


def test_disjoint_masks_are_invalid(rng):
    ma = dense_map(rng)
    ma.valid[:, 12:] = False
    mg = SparseGridMap(ma.spec, ma.features.copy(), ~ma.valid)
    assert score_hypothesis(ma, mg) == (None, 0)


def test_mean_of_two_similarities():
    spec = GridSpec.centered(2, 1, 1.0)
    ma = SparseGridMap(spec, np.array([[[1.0, 0.0], [1.0, 0.0]]]), np.ones((1, 2), bool))
    mg = SparseGridMap(spec, np.array([[[2.0, 0.0], [0.0, 3.0]]]), np.ones((1, 2), bool))
    assert score_hypothesis(ma, mg) == (0.5, 2)


def test_zero_norm_pixels_do_not_count(rng):
    ma = dense_map(rng, 4, 4, 2)
    mg = SparseGridMap(ma.spec, ma.features.copy(), ma.valid.copy())
    mg.features[0, 0] = 0.0
    assert score_hypothesis(ma, mg) == (pytest.approx(1.0), 15)


def shifted_copy(rng, dx, dy, size=40, border=6):
    """Aerial map plus a ground map that the hypothesis (dx, dy) maps back onto it."""
    ma = dense_map(rng, size, size)
    crop = np.zeros_like(ma.valid)
    crop[border:-border, border:-border] = True
    cropped = SparseGridMap(ma.spec, ma.features * crop[..., None], crop)
    return ma, shift_map(cropped, -dy, -dx)


def test_shifted_copy_peaks_at_its_offset(rng):
    ma, mg = shifted_copy(rng, 3, -2)
    grid = HypothesisGrid([0.0], 5, 5, 0.6)
    vol = correlate_maps(ma, [mg], grid)
    angle, (dx, dy), score = best_hypothesis(vol)
    assert (math.degrees(angle), dx, dy) == (0.0, 3, -2)
    assert score == pytest.approx(1.0, abs=1e-12)


def test_identity_hypothesis_on_identical_data(rng):
    ma, mg = shifted_copy(rng, 0, 0)
    vol = correlate_maps(ma, [mg], HypothesisGrid([0.0], 2, 2))
    assert vol.scores[0, 2, 2] == pytest.approx(1.0, abs=1e-12)


def test_metric_translation_of_a_shift():
    assert hypothesis_pose(0.0, 3, -2, 0.2).as_array() == pytest.approx([0.6, 0.4, 0.0])


def test_correlate_recovers_cloud_offset(rng):
    """End to end on a lidar-like cloud: texture sampled where the shifted vehicle really is."""
    q = 0.2
    spec = GridSpec.centered(121, 121, q)
    texture = rng.standard_normal((121, 121, 4))
    pts = np.column_stack([rng.uniform(-8, 8, 3000), rng.uniform(-8, 8, 3000), np.zeros(3000)])
    true_shift = (4 * q, -3 * q)  # dx = +4 px, dy = +3 px (down)
    row, col = spec.pixel_of(pts[:, :2] + true_shift)
    pf = PointFeatures(texture[row, col], np.ones(len(pts), bool))
    fa = FeatureMap(texture[10:111, 10:111])
    ma = pad_aerial(fa, spec)
    grid = HypothesisGrid(rotation_schedule(5, 2.0), 6, 6, 0.6)
    vol = correlate(ma, pf, PointCloud(pts), grid, spec)
    angle, (dx, dy), score = best_hypothesis(vol)
    assert (angle, dx, dy) == (0.0, 4, 3)
    assert score > 0.9


def test_volume_shape_and_poses():
    grid = HypothesisGrid(default_rotations(), 4, 3)
    assert grid.shape == (21, 7, 9)
    vol = ConfidenceVolume(grid.rotations, grid.dys, grid.dxs, np.zeros(grid.shape), np.ones(grid.shape, int),
                           np.ones(grid.shape, bool), np.ones(21, int), 0.2)
    poses = vol.hypothesis_poses()
    assert poses.shape == (21, 7, 9, 3)
    np.testing.assert_allclose(poses[0, 0, 0], [-0.8, 0.6, grid.rotations[0]])


def test_default_rotations():
    r = np.degrees(default_rotations())
    assert len(r) == 21 and r[10] == 0.0
    assert r.min() == -8.0 and r.max() == 8.0
    np.testing.assert_allclose(r, -r[::-1])
    steps = np.diff(r)
    assert np.all(steps[10:-1] <= steps[11:])  # denser near zero


def vol_from(scores, valid=None):
    scores = np.asarray(scores, dtype=float)
    valid = np.isfinite(scores) if valid is None else valid
    r, ny, nx = scores.shape
    return ConfidenceVolume(np.linspace(-1, 1, r) if r > 1 else np.zeros(1), np.arange(ny) - ny // 2,
                            np.arange(nx) - nx // 2, scores, valid.astype(int), valid, np.ones(r, int), 0.2)


def test_single_valid_hypothesis():
    s = np.full((2, 3, 3), np.nan)
    s[1, 2, 0] = -0.3
    vol = vol_from(s)
    assert best_hypothesis(vol) == (1.0, (-1, 1), -0.3)


def test_tie_break_is_lexicographic():
    s = np.zeros((3, 3, 3))
    s[2, 0, 0] = s[1, 2, 2] = s[1, 1, 0] = 0.9
    angle, (dx, dy), _ = best_hypothesis(vol_from(s))
    assert (angle, dx, dy) == (0.0, -1, 0)


def test_empty_volume_is_no_fix():
    with pytest.raises(NoFixError):
        best_hypothesis(vol_from(np.full((1, 3, 3), np.nan)))


def test_overlap_gate_threshold(rng):
    ma = dense_map(rng, 16, 16, 3)
    ma.valid[:, 8:] = False
    mg = SparseGridMap(ma.spec, rng.standard_normal((16, 16, 3)), np.ones((16, 16), bool))
    vol = correlate_direct(ma, [mg], HypothesisGrid([0.0], 0, 0, alpha=0.5))
    assert vol.valid[0, 0, 0] and vol.overlap[0, 0, 0] == 128
    vol = correlate_direct(ma, [mg], HypothesisGrid([0.0], 0, 0, alpha=0.51))
    assert not vol.valid[0, 0, 0]


@given(st.integers(0, 2**31 - 1))
def test_fft_matches_direct(seed):
    ma, ground, grid = random_correlation_instance(np.random.default_rng(seed))
    fast = correlate_maps(ma, ground, grid)
    slow = correlate_direct(ma, ground, grid)
    np.testing.assert_array_equal(fast.valid, slow.valid)
    np.testing.assert_array_equal(fast.overlap, slow.overlap)
    np.testing.assert_allclose(fast.scores[fast.valid], slow.scores[slow.valid], atol=1e-9)
    assert np.all(np.abs(fast.scores[fast.valid]) <= 1.0)


def test_worker_count_does_not_change_volume(rng):
    ma, ground, grid = random_correlation_instance(rng)
    a = correlate_maps(ma, ground, grid, workers=1)
    b = correlate_maps(ma, ground, grid, workers=3)
    np.testing.assert_array_equal(a.scores, b.scores)


def test_rotated_cloud_is_scored_at_matching_rotation(rng):
    q = 0.25
    spec = GridSpec.centered(101, 101, q)
    pts = np.column_stack([rng.uniform(-10, 10, 4000), rng.uniform(-10, 10, 4000), np.zeros(4000)])
    texture = rng.standard_normal((101, 101, 3))
    truth = Pose2(math.radians(4.5))
    row, col = spec.pixel_of(truth.apply(pts[:, :2]))
    pf = PointFeatures(texture[row, col], np.ones(len(pts), bool))
    ma = SparseGridMap(spec, texture, np.ones((101, 101), bool))
    vol = correlate(ma, pf, PointCloud(pts), HypothesisGrid(default_rotations(), 2, 2), spec)
    angle, (dx, dy), _ = best_hypothesis(vol)
    assert (round(math.degrees(angle), 6), dx, dy) == (4.5, 0, 0)
    assert rasterize(pf, PointCloud(pts), truth, spec).valid.any()


@given(st.integers(-3, 3), st.integers(-3, 3), st.integers(0, 2**31 - 1))
def test_shift_theorem(sy, sx, seed):
    rng = np.random.default_rng(seed)
    ma = dense_map(rng, 20, 20, 3)
    ground = random_sparse_map(rng, 20, 20, 3, 0.3)
    ground.valid[:4] = ground.valid[-4:] = False
    ground.valid[:, :4] = ground.valid[:, -4:] = False
    ground.features[~ground.valid] = 0.0
    grid = HypothesisGrid([0.0], 6, 6, 0.3)
    base = correlate_maps(ma, [ground], grid)
    moved = correlate_maps(ma, [shift_map(ground, sy, sx)], grid)
    # hypothesis (dx, dy) on the moved map equals (dx + sx, dy + sy) on the original
    for i, dy in enumerate(grid.dys):
        for j, dx in enumerate(grid.dxs):
            i0, j0 = i + sy, j + sx
            if 0 <= i0 < len(grid.dys) and 0 <= j0 < len(grid.dxs) and base.valid[0, i0, j0] and moved.valid[0, i, j]:
                assert moved.scores[0, i, j] == pytest.approx(base.scores[0, i0, j0], abs=1e-9)


def test_reordering_rotations_permutes_planes(rng):
    ma, ground, grid = random_correlation_instance(rng)
    while len(grid.rotations) < 2:
        ma, ground, grid = random_correlation_instance(rng)
    order = np.arange(len(grid.rotations))[::-1]
    flipped = HypothesisGrid(grid.rotations[order], grid.max_shift_x, grid.max_shift_y, grid.alpha)
    a = correlate_maps(ma, ground, grid)
    b = correlate_maps(ma, [ground[i] for i in order], flipped)
    np.testing.assert_array_equal(a.scores[order], b.scores)
