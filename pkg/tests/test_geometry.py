import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geopose.errors import InvalidArgumentError
from geopose.geometry import (
    AffineCamera,
    GeocentricPose,
    PointPair,
    flow_field,
    pose_from_pair,
    project,
    wrap_angle,
)
from geopose.raster import Raster


def angle_diff(a, b):
    return abs(wrap_angle(a - b))


@pytest.mark.parametrize(
    "a, world, expected",
    [
        ([[1, 0, 0], [0, 1, 0]], (3, 4, 7), (3, 4)),
        ([[1, 0, 0.5], [0, 1, 0]], (0, 0, 2), (1, 0)),
        # hand multiply: (2*1 + 1*2 + 0.3*10, 0*1 + 1*2 - 0.2*10)
        ([[2, 1, 0.3], [0, 1, -0.2]], (1, 2, 10), (7, 0)),
    ],
)
def test_project_examples(a, world, expected):
    np.testing.assert_allclose(project(AffineCamera(a), world), expected, atol=1e-12)


def test_project_rejects_non_finite():
    cam = AffineCamera([[1, 0, 0], [0, 1, 0]])
    with pytest.raises(InvalidArgumentError):
        project(cam, (np.nan, 0, 0))
    with pytest.raises(InvalidArgumentError):
        AffineCamera([[1, 0, np.inf], [0, 1, 0]])


def test_project_batches():
    cam = AffineCamera([[2, 1, 0.3], [0, 1, -0.2]])
    pts = np.array([[1, 2, 10], [0, 0, 0]])
    np.testing.assert_allclose(project(cam, pts), [[7, 0], [0, 0]], atol=1e-12)


def test_pose_from_pair_345():
    r = pose_from_pair(PointPair((0, 0), (3, 4), 5))
    assert r.angle == pytest.approx(math.atan2(4, 3))
    assert r.angle == pytest.approx(0.92730, abs=1e-5)
    assert r.magnitude == 5
    assert r.scale == 1.0
    assert not r.degenerate


def test_pose_from_pair_nadir_is_degenerate():
    r = pose_from_pair(PointPair((5, 5), (5, 5), 10))
    assert (r.angle, r.magnitude, r.scale, r.degenerate) == (0.0, 0.0, 0.0, True)


def test_pose_from_pair_vertical():
    r = pose_from_pair(PointPair((1, 1), (1, -2), 2))
    assert r.angle == pytest.approx(-math.pi / 2)
    assert r.magnitude == 3
    assert r.scale == 1.5


@pytest.mark.parametrize("h", [0, -1])
def test_pose_from_pair_bad_height(h):
    with pytest.raises(InvalidArgumentError):
        pose_from_pair(PointPair((0, 0), (1, 1), h))


@settings(max_examples=300, deadline=None)
@given(
    s=st.floats(1e-6, 3.0),
    theta=st.floats(-math.pi, math.pi, exclude_max=True),
    h=st.floats(1e-6, 200.0),
)
def test_pose_round_trip(s, theta, h):
    m = s * h
    r = pose_from_pair(PointPair((0.0, 0.0), (m * math.cos(theta), m * math.sin(theta)), h))
    if m < 1e-9:
        assert r.degenerate and r.scale == 0.0
        return
    assert angle_diff(r.angle, theta) <= 1e-9
    assert abs(r.scale - s) <= 1e-9


@settings(max_examples=300, deadline=None)
@given(
    s=st.floats(1e-3, 3.0),
    theta=st.floats(-math.pi, math.pi, exclude_max=True),
    h=st.floats(1e-2, 200.0),
    gx=st.floats(-2048, 2048),
    gy=st.floats(-2048, 2048),
)
def test_pose_round_trip_offset_ground(s, theta, h, gx, gy):
    # absolute rounding of the pixel coordinates limits what a short pair can resolve
    m = s * h
    pair = PointPair((gx, gy), (gx + m * math.cos(theta), gy + m * math.sin(theta)), h)
    r = pose_from_pair(pair)
    coord_eps = 4 * np.spacing(max(abs(gx), abs(gy), m, 1.0))
    assert angle_diff(r.angle, theta) <= 1e-9 + coord_eps / m
    assert abs(r.scale - s) <= 1e-9 + coord_eps / h


@settings(max_examples=100, deadline=None)
@given(
    a=st.lists(st.floats(-3, 3), min_size=6, max_size=6),
    xy=st.lists(st.floats(-100, 100), min_size=4, max_size=4),
    z0=st.floats(-50, 50),
    h=st.floats(0.1, 100),
)
def test_affine_parallelism(a, xy, z0, h):
    cam = AffineCamera(np.reshape(a, (2, 3)))
    x1, y1, x2, y2 = xy
    d1 = project(cam, (x1, y1, z0 + h)) - project(cam, (x1, y1, z0))
    d2 = project(cam, (x2, y2, z0 + h)) - project(cam, (x2, y2, z0))
    np.testing.assert_allclose(d1, d2, atol=1e-9)
    # ratio of lengths on parallel lines
    d3 = project(cam, (x1, y1, z0 + 2 * h)) - project(cam, (x1, y1, z0))
    np.testing.assert_allclose(d3, 2 * d1, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(0.01, 3), theta=st.floats(-math.pi, math.pi), h=st.floats(0.1, 200))
def test_magnitude_linear_in_height(s, theta, h):
    def mag(hh):
        return pose_from_pair(PointPair((0, 0), (s * hh * math.cos(theta), s * hh * math.sin(theta)), hh)).magnitude

    assert mag(2 * h) == pytest.approx(2 * mag(h), rel=1e-12)


@pytest.mark.parametrize(
    "s, theta, h, vec, mag",
    [
        (1.0, 0.0, 5.0, (5.0, 0.0), 5.0),
        (0.5, math.pi / 2, 4.0, (0.0, 2.0), 2.0),
        (0.7, 1.0, 0.0, (0.0, 0.0), 0.0),
    ],
)
def test_flow_field_examples(s, theta, h, vec, mag):
    f = flow_field(GeocentricPose(s, theta, Raster(np.array([[h]]))))
    np.testing.assert_allclose(f.vectors.data[0, 0], vec, atol=1e-12)
    assert f.magnitudes.data[0, 0, 0] == pytest.approx(mag)


def test_flow_field_invalid_and_magnitudes():
    rng = np.random.default_rng(3)
    h = rng.uniform(0, 50, (16, 16))
    h[3, 4] = np.nan
    pose = GeocentricPose(0.8, -2.0, Raster(h))
    f = flow_field(pose)
    assert not f.vectors.valid[3, 4] and not f.magnitudes.valid[3, 4]
    ok = f.magnitudes.valid
    np.testing.assert_allclose(f.magnitudes.band()[ok], 0.8 * h[ok], rtol=1e-12)
    norms = np.hypot(f.vectors.band(0), f.vectors.band(1))
    np.testing.assert_allclose(norms[ok], f.magnitudes.band()[ok], atol=1e-6)


def test_pose_invariants():
    with pytest.raises(InvalidArgumentError):
        GeocentricPose(-0.1, 0, Raster(np.zeros((2, 2))))
    with pytest.raises(InvalidArgumentError):
        GeocentricPose(1, 0, Raster(np.full((2, 2), -1.0)))
    p = GeocentricPose(0.0, 3 * math.pi, Raster(np.zeros((2, 2))))
    assert -math.pi <= p.angle < math.pi


@pytest.mark.parametrize("a", [math.pi, -math.pi, 7.0, -7.0, 0.0, -1e-18])
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi <= w < math.pi
    assert math.cos(w) == pytest.approx(math.cos(a))
