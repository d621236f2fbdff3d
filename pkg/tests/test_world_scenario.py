import numpy as np
import pytest

from geotrack.config import ConfigError, load_config
from geotrack.projection import sample_point_features
from geotrack.providers import SyntheticAerialProvider, SyntheticGroundProvider
from geotrack.scenario import compute_ape, grid_spec, run_scenario
from geotrack.world import check_coverage, generate_world


def test_same_seed_gives_identical_worlds(small_cfg):
    a = generate_world(small_cfg)
    b = generate_world(small_cfg, workers=3)
    assert a.to_bytes() == b.to_bytes()
    small_cfg.world.seed = 1
    assert generate_world(small_cfg).digest() != a.digest()


def test_noiseless_ground_features_match_the_texture(small_cfg):
    world = generate_world(small_cfg)
    provider = SyntheticGroundProvider(world, feature_sigma=0.0)
    k = 500
    cloud = world.scan(k)
    maps = [provider.ground_features(i, float(world.times[k])) for i in range(len(world.cameras))]
    pf = sample_point_features(maps, world.cameras, cloud)
    assert pf.valid.mean() > 0.5
    expected = world.sample_texture(world.pose_at(k).apply(cloud.points[pf.valid, :2]))
    # both sides are bilinear interpolations of the same field, at slightly different footprints
    cos = np.sum(pf.features[pf.valid] * expected, 1) / (
        np.linalg.norm(pf.features[pf.valid], axis=1) * np.linalg.norm(expected, axis=1))
    assert np.median(cos) > 0.98


def test_aerial_tile_is_the_texture_around_the_pose(small_cfg):
    world = generate_world(small_cfg)
    spec = grid_spec(small_cfg)
    fa = SyntheticAerialProvider(world).aerial_features(world.pose_at(0), spec, 160)
    centre = world.sample_texture(world.pose_at(0).apply(np.zeros((1, 2))))[0]
    np.testing.assert_allclose(fa.data[80, 80], centre, atol=1e-6)


def test_full_dropout_means_no_accepted_fixes(small_cfg):
    small_cfg.world.lidar_dropout = 1.0
    world = generate_world(small_cfg)
    assert len(world.scan(100)) == 0
    result = run_scenario(world, small_cfg)
    assert result.metrics.fixes == 20
    assert result.metrics.fix_acceptance_rate == 0.0


def test_perfect_dead_reckoning(small_cfg):
    small_cfg.world.sigma_a = 0.0
    small_cfg.world.sigma_omega = 0.0
    small_cfg.world.duration = 60.0
    small_cfg.registration.enabled = False
    result = run_scenario(generate_world(small_cfg), small_cfg)
    assert result.metrics.mean_ape < 1e-3


def test_trajectory_escaping_the_texture_is_a_config_error(small_cfg):
    small_cfg.world.margin = 5.0
    with pytest.raises(ConfigError):
        check_coverage(generate_world(small_cfg), 20.0)


def test_ideal_features_hit_the_true_cell():
    """Registration every second with ideal features, over one minute of the tracking scenario."""
    cfg = load_config("configs/tracking_5min.cfg", {"world.duration": "60", "world.feature_sigma": "0"})
    result = run_scenario(generate_world(cfg), cfg)
    m = result.metrics
    assert m.fixes == 60 and m.fix_acceptance_rate == 1.0
    assert m.translation_hit_rate >= 0.99
    assert m.mean_ape <= cfg.registration.resolution + 0.05


@pytest.mark.xfail(strict=True, reason="rotation set is finer than the angular resolution of the tile; "
                                        "see the README tracking notes")
def test_ideal_features_hit_the_true_rotation_cell():
    cfg = load_config("configs/tracking_5min.cfg", {"world.duration": "30", "world.feature_sigma": "0"})
    assert run_scenario(generate_world(cfg), cfg).metrics.argmax_hit_rate >= 0.99


def test_ape_examples():
    t = np.arange(5) * 0.1
    truth = np.column_stack([t, 2 * t])
    est = np.column_stack([t, truth])
    assert compute_ape(est, t, truth).mean_ape == 0.0
    shifted = est.copy()
    shifted[:, 1] += 1.0
    m = compute_ape(shifted, t, truth)
    assert (m.mean_ape, m.max_ape) == pytest.approx((1.0, 1.0))
    two = np.array([[0.0, 0.5, 0.0], [0.1, 0.0, 1.5]])
    m = compute_ape(two, np.array([0.0, 0.1]), np.zeros((2, 2)))
    assert (m.mean_ape, m.max_ape) == pytest.approx((1.0, 1.5))


def test_ape_association_tolerance():
    truth_t = np.array([0.0, 1.0])
    truth = np.zeros((2, 2))
    m = compute_ape(np.array([[0.009, 1.0, 0.0], [0.5, 9.0, 9.0]]), truth_t, truth)
    assert len(m.per_step_errors) == 1
    with pytest.raises(ValueError):
        compute_ape(np.array([[0.5, 0.0, 0.0]]), truth_t, truth)
    with pytest.raises(ValueError):
        compute_ape(np.zeros((0, 3)), truth_t, truth)
