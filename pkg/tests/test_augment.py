import math

import numpy as np
import pytest

from geopose.augment import (
    AugmentedSample,
    height_augment,
    rotate_augment,
    rotate_points,
    scale_augment,
    scale_points,
)
from geopose.errors import InvalidArgumentError
from geopose.geometry import GeocentricPose, PointPair, flow_field, pose_from_pair, wrap_angle
from geopose.raster import Raster
from geopose.synth import Box, SceneSpec, SyntheticScene, generate_scene, render, vertical_pairs


def sample_for(scene, s, theta):
    return AugmentedSample.from_render(render(scene, s, theta))


def flow_gap(sample):
    """Largest difference between the carried flow and flow recomputed from the labels."""
    ref = flow_field(sample.pose)
    ok = sample.flow.vectors.valid & ref.vectors.valid
    if not ok.any():
        return 0.0
    return float(np.max(np.abs(sample.flow.vectors.data[ok] - ref.vectors.data[ok])))


def same(a: AugmentedSample, b: AugmentedSample):
    return (
        a.image.identical(b.image)
        and a.pose.heights.identical(b.pose.heights)
        and a.flow.vectors.identical(b.flow.vectors)
        and a.flow.magnitudes.identical(b.flow.magnitudes)
        and a.pose.scale == b.pose.scale
        and a.pose.angle == b.pose.angle
    )


@pytest.fixture
def scene():
    return generate_scene(21, SceneSpec(n_boxes=6, height_range=(3, 25), extent=(96, 96)))


@pytest.mark.parametrize("interp", ["nearest", "bilinear"])
def test_rotate_zero_is_identity(scene, interp):
    smp = sample_for(scene, 0.6, 0.4)
    assert same(rotate_augment(smp, 0.0, interp), smp)


def test_rotate_quarter_turn_labels(scene):
    smp = sample_for(scene, 0.6, 0.0)
    out = rotate_augment(smp, math.pi / 2, "nearest")
    assert out.pose.angle == pytest.approx(-math.pi / 2)
    assert out.pose.scale == smp.pose.scale
    a = np.sort(smp.pose.heights.band().ravel())
    b = np.sort(out.pose.heights.band().ravel())
    np.testing.assert_array_equal(a, b)

    shape = smp.image.shape
    # points and pixels move together
    rng = np.random.default_rng(0)
    pts = rng.integers(0, 96, size=(50, 2)).astype(float)
    moved = np.floor(rotate_points(pts, math.pi / 2, shape) + 0.5).astype(int)
    src = smp.image.data[pts[:, 1].astype(int), pts[:, 0].astype(int)]
    dst = out.image.data[moved[:, 1], moved[:, 0]]
    np.testing.assert_array_equal(src, dst)

    for pair in vertical_pairs(scene, 0.6, 0.0):
        g, srf = rotate_points([pair.ground, pair.surface], math.pi / 2, shape)
        r = pose_from_pair(PointPair(tuple(g), tuple(srf), pair.height))
        assert abs(wrap_angle(r.angle - out.pose.angle)) < 1e-9
        assert r.scale == pytest.approx(out.pose.scale, abs=1e-9)


def test_rotate_round_trip(scene):
    smp = sample_for(scene, 0.6, 0.4)
    back = rotate_augment(rotate_augment(smp, math.pi / 2), -math.pi / 2)
    ok = back.image.valid & smp.image.valid
    assert ok[8:-8, 8:-8].sum() > 0.9 * smp.image.valid[8:-8, 8:-8].sum()
    assert np.max(np.abs(back.image.data[ok] - smp.image.data[ok])) <= 1e-3
    assert back.pose.angle == pytest.approx(smp.pose.angle)

    # generic angle on content bilinear reproduces exactly
    yy, xx = np.mgrid[0:64, 0:64].astype(float)
    ramp = Raster(0.01 * xx + 0.02 * yy)
    h = Raster(np.zeros((64, 64)))
    pose = GeocentricPose(0.5, 1.0, h)
    s2 = AugmentedSample(ramp, pose, flow_field(pose))
    back = rotate_augment(rotate_augment(s2, 0.37), -0.37)
    ok = back.image.valid
    assert ok[16:48, 16:48].all()
    assert np.max(np.abs(back.image.band()[ok] - ramp.band()[ok])) <= 1e-3


@pytest.mark.parametrize("d_angle", [0.3, -1.2, 2.9])
def test_rotate_label_consistency(scene, d_angle):
    out = rotate_augment(sample_for(scene, 0.8, -0.7), d_angle)
    assert flow_gap(out) <= 1e-3


def test_scale_one_is_identity(scene):
    smp = sample_for(scene, 0.5, 1.1)
    assert same(scale_augment(smp, 1.0), smp)


def test_scale_doubles_labels(scene):
    smp = sample_for(scene, 0.5, 1.1)
    out = scale_augment(smp, 2.0)
    assert out.pose.scale == 1.0
    assert out.pose.angle == smp.pose.angle
    g, srf = scale_points([(10.0, 10.0), (13.0, 10.0)], 2.0)
    assert pose_from_pair(PointPair(tuple(g), tuple(srf), 6.0)).magnitude == 6.0
    assert flow_gap(out) <= 1e-3


@pytest.mark.parametrize("factor", [0.0, -1.0, math.nan])
def test_scale_rejects_degenerate(scene, factor):
    with pytest.raises(InvalidArgumentError):
        scale_augment(sample_for(scene, 0.5, 0.0), factor)


def test_scale_composition(scene):
    smp = sample_for(scene, 0.37, 0.2)
    out = scale_augment(scale_augment(smp, 1.3), 0.7)
    assert abs(out.pose.scale - 1.3 * 0.7 * 0.37) <= 1e-9
    assert flow_gap(out) <= 1e-3


def test_height_one_is_identity(scene):
    smp = sample_for(scene, 0.7, 2.0)
    assert same(height_augment(smp, 1.0), smp)


def test_height_nadir_does_not_move(scene):
    smp = sample_for(scene, 0.0, 0.5)
    out = height_augment(smp, 2.5)
    assert out.image.identical(smp.image)
    np.testing.assert_array_equal(out.pose.heights.band(), 2.5 * smp.pose.heights.band())


def test_height_single_box_shift():
    sc = SyntheticScene((64, 64), [Box(1, 20, 20, 30, 30, 4.0)])
    smp = sample_for(sc, 0.5, 0.0)
    h = smp.pose.heights.band()
    assert (h[20:30, 22:32] == 4).all()
    out = height_augment(smp, 2.0)
    oh = out.pose.heights.band()
    assert (oh[20:30, 24:34] == 8).all()
    assert np.isnan(oh[20:30, 22:24]).all()

    fresh = render(sc.scaled_heights(2.0), 0.5, 0.0).heights.band()
    ok = ~np.isnan(oh) & ~np.isnan(fresh)
    assert np.mean(oh[ok] == fresh[ok]) >= 0.99


def test_height_rejects_negative(scene):
    with pytest.raises(InvalidArgumentError):
        height_augment(sample_for(scene, 0.5, 0.0), -0.5)


def test_height_flow_exact_and_counts(scene):
    smp = sample_for(scene, 0.9, -2.2)
    out = height_augment(smp, 2.3)
    assert flow_gap(out) == 0.0
    n_in = np.count_nonzero(smp.pose.heights.band() > 0)
    n_out = np.count_nonzero(out.pose.heights.band() > 0)
    assert n_out <= n_in

    iso = SyntheticScene((64, 64), [Box(1, 10, 10, 20, 20, 5.0)])
    smp = sample_for(iso, 0.6, 0.9)
    out = height_augment(smp, 1.7)
    assert np.count_nonzero(out.pose.heights.band() > 0) == np.count_nonzero(smp.pose.heights.band() > 0)


@pytest.mark.parametrize("seed", range(5))
def test_height_matches_fresh_render(seed):
    rng = np.random.default_rng(seed)
    sc = generate_scene(seed, SceneSpec(n_boxes=8, height_range=(2, 30), size_range=(8, 40), extent=(256, 256)))
    s, theta = rng.uniform(0, 1), rng.uniform(-math.pi, math.pi)
    out = height_augment(sample_for(sc, s, theta), 2.3)
    fresh = render(sc.scaled_heights(2.3), s, theta)
    a, b = out.pose.heights.band(), fresh.heights.band()
    ok = ~np.isnan(a) & ~np.isnan(b)
    assert np.mean(a[ok] == b[ok]) >= 0.99


def test_provenance_records_ops(scene):
    smp = sample_for(scene, 0.5, 0.0)
    out = height_augment(scale_augment(rotate_augment(smp, 0.1), 1.5), 2.0)
    assert [p["op"] for p in out.provenance] == ["rotate", "scale", "height"]
