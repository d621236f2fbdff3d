import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geotrack.geodesy import (EARTH_RADIUS, GeodesyError, GeoPose, LocalFrame, Pose2, apply, compose,
                              geo_to_local, haversine, invert, local_to_geo, wrap_angle)

angles = st.floats(-10, 10, allow_nan=False)
coords = st.floats(-1e4, 1e4, allow_nan=False)
poses = st.builds(Pose2, angles, coords, coords)


def close(a: Pose2, b: Pose2, tol=1e-9):
    return (abs(wrap_angle(a.angle - b.angle)) < tol and abs(a.tx - b.tx) < tol * max(1, abs(b.tx))
            and abs(a.ty - b.ty) < tol * max(1, abs(b.ty)))


def test_origin_maps_to_identity():
    frame = LocalFrame(GeoPose(49.0, 8.4, 37.0))
    p = geo_to_local(frame, frame.origin)
    assert close(p, Pose2.identity(), 1e-12)


def test_north_offset_at_equator_matches_haversine():
    frame = LocalFrame(GeoPose(0.0, 0.0, 0.0))
    p = geo_to_local(frame, GeoPose(0.001, 0.0, 0.0))
    oracle = haversine(0.0, 0.0, 0.001, 0.0)
    assert oracle == pytest.approx(111.3195, abs=1e-3)
    assert p.tx == pytest.approx(0.0, abs=1e-9)
    assert p.ty == pytest.approx(oracle, abs=0.01)


def test_east_offset_at_49_degrees():
    frame = LocalFrame(GeoPose(49.0, 8.4, 0.0))
    p = geo_to_local(frame, GeoPose(49.0, 8.401, 0.0))
    assert p.tx == pytest.approx(111319.49 * 0.001 * math.cos(math.radians(49.0)), abs=0.05)
    assert p.tx == pytest.approx(haversine(49.0, 8.4, 49.0, 8.401), abs=0.05)
    assert abs(p.ty) < 0.05


def test_identity_maps_back_to_origin():
    frame = LocalFrame(GeoPose(-33.9, 151.2, 120.0))
    g = local_to_geo(frame, Pose2.identity())
    assert g.latitude == pytest.approx(-33.9, abs=1e-12)
    assert g.longitude == pytest.approx(151.2, abs=1e-12)
    assert g.bearing == pytest.approx(120.0, abs=1e-9)


def test_inverse_of_north_offset():
    frame = LocalFrame(GeoPose(0.0, 0.0, 0.0))
    g = local_to_geo(frame, Pose2(0.0, 0.0, 111.3195))
    assert g.latitude == pytest.approx(0.001, abs=1e-7)
    assert g.longitude == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("lat0", [0.0, 49.0, -70.0])
def test_round_trip_1000_random_poses(lat0):
    rng = np.random.default_rng(7)
    frame = LocalFrame(GeoPose(lat0, 8.4, 10.0))
    worst = 0.0
    for _ in range(1000):
        r, th = 5000 * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi)
        p = Pose2(rng.uniform(-math.pi, math.pi), r * math.cos(th), r * math.sin(th))
        g = local_to_geo(frame, p)
        back = geo_to_local(frame, g)
        g2 = local_to_geo(frame, back)
        worst = max(worst, abs(g2.latitude - g.latitude), abs(g2.longitude - g.longitude))
        assert abs(wrap_angle(back.angle - p.angle)) < 1e-9
        assert math.hypot(back.tx - p.tx, back.ty - p.ty) < 1e-6
    assert worst < 1e-9


def test_local_distances_match_haversine_within_2km():
    rng = np.random.default_rng(3)
    for lat0 in (0.0, 49.0):
        frame = LocalFrame(GeoPose(lat0, 8.4, 0.0))
        lat = lat0 + rng.uniform(-0.015, 0.015, 200)
        lon = 8.4 + rng.uniform(-0.015, 0.015, 200)
        p = frame.to_local_points(lat, lon)
        d = np.hypot(p[:, 0], p[:, 1])
        h = haversine(lat0, 8.4, lat, lon)
        keep = (h > 1.0) & (h < 2000)
        assert np.max(np.abs(d[keep] / h[keep] - 1)) < 1e-4


def test_heading_is_relative_to_origin_yaw():
    frame = LocalFrame(GeoPose(10.0, 20.0, 90.0))  # origin facing east
    p = geo_to_local(frame, GeoPose(10.0, 20.0, 0.0))  # same place, facing north
    assert p.angle == pytest.approx(math.pi / 2, abs=1e-12)


@pytest.mark.parametrize("lat", [85.5, -89.0])
def test_latitude_outside_mercator_domain(lat):
    frame = LocalFrame(GeoPose(0.0, 0.0, 0.0))
    with pytest.raises(GeodesyError):
        geo_to_local(frame, GeoPose(lat, 0.0, 0.0))
    with pytest.raises(GeodesyError):
        LocalFrame(GeoPose(lat, 0.0, 0.0))


def test_haversine_quarter_meridian():
    assert haversine(0.0, 0.0, 90.0, 0.0) == pytest.approx(math.pi / 2 * EARTH_RADIUS, rel=1e-12)


def test_apply_rotation_by_quarter_turn():
    a = Pose2(math.pi / 2, 1.0, 0.0)
    np.testing.assert_allclose(apply(a, [1.0, 0.0]), [1.0, 1.0], atol=1e-15)


@given(poses)
def test_identity_law(a):
    assert close(compose(Pose2.identity(), a), a)
    assert close(compose(a, Pose2.identity()), a)


@given(poses)
def test_inverse_law(a):
    e = compose(a, invert(a))
    assert abs(wrap_angle(e.angle)) < 1e-12
    assert math.hypot(e.tx, e.ty) < 1e-12 * max(1.0, math.hypot(a.tx, a.ty))


@given(poses, poses, poses)
def test_associativity(a, b, c):
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert abs(wrap_angle(left.angle - right.angle)) < 1e-9
    assert math.hypot(left.tx - right.tx, left.ty - right.ty) < 1e-9 * 1e4


@given(poses, st.floats(-100, 100), st.floats(-100, 100))
def test_apply_matches_matrix(a, x, y):
    np.testing.assert_allclose(apply(a, [x, y]), (a.matrix() @ [x, y, 1.0])[:2], atol=1e-9)


def test_group_axioms_on_ten_thousand_pairs():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        a = Pose2(*rng.uniform([-np.pi, -500, -500], [np.pi, 500, 500]))
        b = Pose2(*rng.uniform([-np.pi, -500, -500], [np.pi, 500, 500]))
        ab = compose(a, b)
        np.testing.assert_allclose(ab.matrix(), a.matrix() @ b.matrix(), atol=1e-9)
        e = compose(ab, invert(ab))
        assert abs(wrap_angle(e.angle)) < 1e-12 and math.hypot(e.tx, e.ty) < 1e-9


def test_north_is_positive_y():
    frame = LocalFrame(GeoPose(49.0, 8.4))
    p = geo_to_local(frame, GeoPose(49.001, 8.4))
    assert p.ty > 100 and abs(p.tx) < 1e-9
