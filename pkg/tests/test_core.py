import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from greenseg.core import (
    ConfigError,
    LabeledCloud,
    Plane,
    PointCloud,
    RigidTransform,
    SegParams,
    SemanticLabel,
    dump_params,
    dump_transform,
    load_params,
    load_transform,
    parse_key_values,
    params_from_mapping,
    validate_params,
)


def test_defaults_accepted():
    p = SegParams()
    assert validate_params(p) is p
    assert (p.h_ground, p.max_incline, p.robot_height) == (0.12, 30.0, 0.5)
    assert (p.n_neighbors_min, p.r_neighbors, p.rho_min, p.kappa_max) == (30, 0.05, 0.90, 0.05)
    assert (p.r_growing, p.max_distance, p.min_distance) == (0.05, 3.0, 0.3)
    assert p.plane_iterations == 3
    assert p.kappa_split == p.kappa_max


def test_rho_min_out_of_range():
    with pytest.raises(ConfigError, match=r"rho_min out of \(0,1\]"):
        validate_params(SegParams(rho_min=1.2))


def test_distance_ordering():
    with pytest.raises(ConfigError, match="min_distance"):
        validate_params(SegParams(min_distance=3.0, max_distance=0.3))


@pytest.mark.parametrize("change, field", [
    ({"h_ground": 0.0}, "h_ground"),
    ({"kappa_max": 0.4}, "kappa_max"),
    ({"max_incline": 90.0}, "max_incline"),
    ({"n_neighbors_min": 0}, "n_neighbors_min"),
    ({"r_growing": -1.0}, "r_growing"),
    ({"range_metric": "manhattan"}, "range_metric"),
])
def test_bad_field_named(change, field):
    with pytest.raises(ConfigError, match=field):
        validate_params(SegParams(**change))


def test_first_violation_reported():
    with pytest.raises(ConfigError, match="h_ground"):
        validate_params(SegParams(h_ground=-1, rho_min=2.0))


@given(st.floats(0.01, 1.0), st.floats(0.001, 1 / 3))
def test_validate_idempotent(rho, kappa):
    p = SegParams(rho_min=rho, kappa_max=kappa)
    assert validate_params(validate_params(p)) == p


def test_config_file_round_trip(tmp_path):
    p = SegParams(rho_min=0.8, n_neighbors_min=12, noise_kappa_split=0.1)
    path = tmp_path / "p.cfg"
    path.write_text(dump_params(p))
    assert load_params(path) == p


def test_config_keys_and_separators():
    text = """# table names
    max_surface_height = 0.1
    max_incline: 25
    n_neighbors 20
    """
    p = params_from_mapping(parse_key_values(text))
    assert (p.h_ground, p.max_incline, p.n_neighbors_min) == (0.1, 25.0, 20)


def test_config_unknown_key():
    with pytest.raises(ConfigError, match="unknown key"):
        params_from_mapping({"h_ground": "0.1"})


def test_config_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_key_values("rho_min = 0.9\nrho_min = 0.8\n")


def test_config_bad_value():
    with pytest.raises(ConfigError, match="rho_min"):
        params_from_mapping({"rho_min": "high"})


def test_point_cloud_rejects_nonfinite():
    with pytest.raises(ValueError):
        PointCloud([[0, 0, np.nan]])
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], frame_id="")


def test_point_cloud_is_read_only():
    c = PointCloud(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        c.points[0, 0] = 1.0


def test_labeled_cloud_checks():
    with pytest.raises(ValueError):
        LabeledCloud(np.zeros((2, 3)), [0])
    with pytest.raises(ValueError):
        LabeledCloud(np.zeros((1, 3)), [7])
    lc = LabeledCloud(np.zeros((4, 3)), [0, 1, 1, 3])
    assert lc.counts() == {SemanticLabel.GROUND: 1, SemanticLabel.OBSTACLE: 2,
                           SemanticLabel.ABOVE: 0, SemanticLabel.NOISE: 1}
    assert len(lc.select(SemanticLabel.OBSTACLE)) == 2


def test_rigid_transform_validation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 1.01, np.zeros(3))


def test_rpy_and_inverse():
    tf = RigidTransform.from_rpy(10, 30, -45, translation=(0.4, 0, 0.5))
    p = np.random.default_rng(0).normal(size=(20, 3))
    np.testing.assert_allclose(tf.inverse().apply(tf.apply(p)), p, atol=1e-12)
    yaw = RigidTransform.from_rpy(0, 0, 90)
    np.testing.assert_allclose(yaw.apply(np.array([[1.0, 0, 0]])), [[0, 1, 0]], atol=1e-12)


def test_transform_file_round_trip(tmp_path):
    tf = RigidTransform.from_rpy(3, 30, 7, translation=(0.4, 0.0, 0.5))
    path = tmp_path / "tf.cfg"
    path.write_text(dump_transform(tf))
    back = load_transform(path)
    assert np.array_equal(back.rotation, tf.rotation)
    assert np.array_equal(back.translation, tf.translation)


def test_transform_file_rpy(tmp_path):
    path = tmp_path / "tf.cfg"
    path.write_text("translation = 0.4 0 0.5\nrpy_deg = 0 30 0\n")
    tf = load_transform(path)
    np.testing.assert_allclose(tf.rotation, RigidTransform.from_rpy(0, 30, 0).rotation)
    path.write_text("translation = 0 0\n")
    with pytest.raises(ConfigError):
        load_transform(path)


def test_plane_canonical_sign():
    p = Plane.from_normal([0.0, 0.1, -1.0], 0.3)
    assert p.normal[2] > 0
    assert math.isclose(np.linalg.norm(p.normal), 1.0, abs_tol=1e-12)
    assert p.offset == pytest.approx(-0.3 / np.linalg.norm([0, 0.1, 1]))
    with pytest.raises(ValueError):
        Plane(np.array([0.0, 0.0, 2.0]), 0.0)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1),
       st.floats(-2, 2))
def test_plane_flip_preserves_distance(normal, offset):
    a = Plane.from_normal(normal, offset)
    b = Plane.from_normal(-np.asarray(normal), -offset)
    q = np.array([0.3, -0.7, 1.1])
    assert abs(a.normal @ q + a.offset) == pytest.approx(abs(b.normal @ q + b.offset), abs=1e-12)
    assert a.normal[2] >= 0 and b.normal[2] >= 0
