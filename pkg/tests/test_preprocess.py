import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenseg.core import PointCloud, RigidTransform, SegParams
from greenseg.preprocess import (
    TransformTable,
    prepare,
    radial_prefilter,
    range_filter,
    transform_to_base,
    valid_mask,
)

from conftest import IDENTITY, random_rotation


def ring(radii):
    return PointCloud(np.column_stack([radii, np.zeros(len(radii)), np.zeros(len(radii))]))


def test_identity_renames_frame():
    c = PointCloud(np.random.default_rng(0).normal(size=(5, 3)), "camera_link")
    out = transform_to_base(c, IDENTITY)
    assert np.array_equal(out.points, c.points)
    assert out.frame_id == "base_link"


def test_mount_translation():
    tf = RigidTransform(np.eye(3), [0.4, 0.0, 0.5])
    out = transform_to_base(PointCloud([[0.0, 0.0, 0.0]]), tf)
    np.testing.assert_array_equal(out.points, [[0.4, 0.0, 0.5]])


def test_yaw_ninety():
    out = transform_to_base(PointCloud([[1.0, 0.0, 0.0]]), RigidTransform.from_rpy(0, 0, 90))
    np.testing.assert_allclose(out.points, [[0.0, 1.0, 0.0]], atol=1e-12)


def test_empty_cloud_rejected():
    with pytest.raises(ValueError):
        transform_to_base(PointCloud(np.empty((0, 3))), IDENTITY)


def test_isometry():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(40, 3))
    tf = RigidTransform(random_rotation(rng), rng.normal(size=3))
    out = transform_to_base(PointCloud(pts), tf).points
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d1 = np.linalg.norm(out[:, None] - out[None], axis=2)
    assert np.max(np.abs(d0 - d1)) < 1e-9


def test_radial_boundary_inclusive():
    out = radial_prefilter(ring([0.1, 0.3, 1.0]), 0.3)
    np.testing.assert_array_equal(out.points[:, 0], [0.3, 1.0])


def test_radial_zero_is_identity_and_all_removed():
    c = ring([0.1, 0.2])
    assert len(radial_prefilter(c, 0.0)) == 2
    assert len(radial_prefilter(c, 0.3)) == 0


def test_range_boundary_inclusive():
    out = range_filter(ring([2.9, 3.0, 3.1]), 3.0)
    np.testing.assert_array_equal(out.points[:, 0], [2.9, 3.0])
    assert len(range_filter(ring([2.9, 3.0, 3.1]), 1e9)) == 3


def test_range_metric_switch():
    c = PointCloud([[2.9, 0.0, 1.0]])
    assert len(range_filter(c, 3.0, "planar")) == 1
    assert len(range_filter(c, 3.0, "euclidean")) == 0
    assert valid_mask(c.points, SegParams(range_metric="euclidean")).sum() == 0


def test_annulus_area_ratio():
    # uniform disk of radius 3.5; the closed annulus [0.3, 3.0] holds (3^2 - 0.3^2) / 3.5^2 of it
    rng = np.random.default_rng(11)
    n = 100_000
    r = 3.5 * np.sqrt(rng.uniform(size=n))
    a = rng.uniform(0, 2 * np.pi, n)
    c = PointCloud(np.column_stack([r * np.cos(a), r * np.sin(a), np.zeros(n)]))
    kept = len(range_filter(radial_prefilter(c, 0.3), 3.0))
    expected = n * (3.0**2 - 0.3**2) / 3.5**2
    assert abs(kept - expected) / expected < 0.02


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0), st.floats(1.0, 4.0))
def test_filters_idempotent_commuting_subsequence(seed, dmin, dmax):
    pts = np.random.default_rng(seed).uniform(-4, 4, size=(200, 3))
    c = PointCloud(pts)
    a = range_filter(radial_prefilter(c, dmin), dmax)
    b = radial_prefilter(range_filter(c, dmax), dmin)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(radial_prefilter(a, dmin).points, a.points)
    assert np.array_equal(range_filter(a, dmax).points, a.points)
    # subsequence: kept rows appear in input order
    idx = [int(np.flatnonzero((pts == p).all(axis=1))[0]) for p in a.points]
    assert idx == sorted(idx)


def test_prepare_returns_input_indices():
    c = ring([0.1, 0.5, 3.5, 1.0])
    valid, index = prepare(c, IDENTITY, SegParams())
    np.testing.assert_array_equal(index, [1, 3])
    np.testing.assert_array_equal(valid.points, c.points[index])


def test_transform_table_lookup():
    a = RigidTransform(np.eye(3), [0, 0, 0])
    b = RigidTransform(np.eye(3), [1, 0, 0])
    table = TransformTable([(0.0, a), (1.0, b)])
    assert table.lookup(0.5) is a
    assert table.lookup(1.0) is b
    with pytest.raises(LookupError):
        table.lookup(-0.1)
