import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenseg.core import (
    HORIZONTAL,
    EmptyCandidates,
    LabeledCloud,
    Plane,
    PointCloud,
    SegParams,
    SemanticLabel,
)
from greenseg.groundfit import baseline_segment, classify_points
from greenseg.localgeom import SpatialIndex, geometric_filter
from greenseg.regiongrow import (
    EMPTY_REGION,
    Region,
    finalize_labels,
    greenseg_segment,
    grow_region,
    select_seed,
    verify_ground,
)

from conftest import IDENTITY, grid_patch
from oracles import component_oracle

G = int(SemanticLabel.GROUND)


def test_seed_closest_radius():
    pts = np.array([[2.0, 0, 0], [1.0, 1.0, 0], [0.5, 0, 5.0]])
    assert select_seed(pts, [0, 1, 2]) == 2


def test_seed_tie_lower_index():
    pts = np.array([[0.0, 1.0, 0], [1.0, 0, 0], [5.0, 0, 0]])
    assert select_seed(pts, [2, 1, 0]) == 0


def test_seed_empty():
    with pytest.raises(EmptyCandidates):
        select_seed(np.zeros((3, 3)), [])


def test_gap_keeps_seed_patch(params):
    a = grid_patch(0.5, 1.0, -0.25, 0.25, 0.01)
    b = grid_patch(1.2, 1.7, -0.25, 0.25, 0.01)
    pts = np.vstack([a, b])
    cand = np.arange(len(pts))
    seed = select_seed(pts, cand)
    region = grow_region(pts, cand, np.ones(len(pts)), HORIZONTAL, seed, params)
    assert np.array_equal(region.members, np.arange(len(a)))
    assert seed in region


def test_single_patch_is_whole(params):
    pts = grid_patch(0.5, 1.0, -0.25, 0.25, 0.02)
    cand = np.arange(len(pts))
    region = grow_region(pts, cand, np.ones(len(pts)), HORIZONTAL, select_seed(pts, cand), params)
    assert np.array_equal(region.members, cand)


def test_seed_must_be_candidate(params):
    pts = grid_patch(0.5, 0.6, 0, 0.1, 0.02)
    with pytest.raises(ValueError):
        grow_region(pts, [1, 2], np.ones(2), HORIZONTAL, 0, params)


def random_instance(seed, n=1000):
    rng = np.random.default_rng(seed)
    pts = rng.uniform([0, 0, -0.2], [1.0, 1.0, 0.2], size=(n + 300, 3))
    cand = np.sort(rng.choice(len(pts), size=n, replace=False))
    rho = rng.uniform(0.8, 1.0, n)
    plane = Plane.from_normal(rng.normal([0, 0, 1], 0.02), rng.normal(0, 0.02))
    return pts, cand, rho, plane


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_matches_component_oracle(seed):
    pts, cand, rho, plane = random_instance(seed, 400)
    params = SegParams(r_growing=0.08)
    s = select_seed(pts, cand)
    region = grow_region(pts, cand, rho, plane, s, params)
    expected = component_oracle(pts, cand, rho, plane.normal, plane.offset, s,
                                params.h_ground, params.rho_min, params.r_growing)
    assert region.members.tolist() == expected


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_order_independent_and_index_path(seed):
    pts, cand, rho, plane = random_instance(seed, 500)
    params = SegParams(r_growing=0.07)
    s = select_seed(pts, cand)
    ref = grow_region(pts, cand, rho, plane, s, params)
    perm = np.random.default_rng(seed).permutation(len(cand))
    shuffled = grow_region(pts, cand[perm], rho[perm], plane, s, params)
    shared = grow_region(pts, cand, rho, plane, s, params, SpatialIndex(pts))
    assert np.array_equal(ref.members, shuffled.members)
    assert np.array_equal(ref.members, shared.members)


def labeled_ground(pts):
    return LabeledCloud(pts, np.zeros(len(pts), dtype=np.uint8))


def test_finalize_full_region_is_identity(params):
    pts = grid_patch(0.5, 1.0, -0.25, 0.25, 0.005)
    base = classify_points(pts, HORIZONTAL, params)
    filt = geometric_filter(base, HORIZONTAL, SpatialIndex(pts), params)
    region = Region(filt.candidates, int(filt.candidates[0]))
    verified, obstacles = finalize_labels(base, region, filt, params)
    assert np.array_equal(verified.labels, base.labels)
    assert len(obstacles) == 0


def test_empty_candidates_fail_safe(params):
    rng = np.random.default_rng(0)
    # sparse ground points: every one has too few neighbors
    pts = rng.uniform([0.5, -1, -0.01], [2.5, 1, 0.01], size=(50, 3))
    base = classify_points(pts, HORIZONTAL, params)
    verified, _, stages = verify_ground(PointCloud(pts), base, HORIZONTAL, params)
    assert stages.region is EMPTY_REGION
    assert not np.any(verified.labels == G)
    assert np.all(verified.labels[base.labels == G] != G)


def ghost_scene(fraction=0.05, h=0.01):
    floor = grid_patch(0.4, 2.5, -1.0, 1.0, h)
    hole_c, hole_r, blob_r = np.array([1.5, 0.0]), 0.4, 0.1
    floor = floor[np.linalg.norm(floor[:, :2] - hole_c, axis=1) > hole_r]
    n_ghost = int(round(fraction * len(floor) / (1 - fraction)))
    rng = np.random.default_rng(1)
    r = blob_r * np.sqrt(rng.uniform(size=n_ghost))
    a = rng.uniform(0, 2 * np.pi, n_ghost)
    ghosts = np.column_stack([hole_c[0] + r * np.cos(a), hole_c[1] + r * np.sin(a),
                              np.full(n_ghost, -0.04)])
    return np.vstack([floor, ghosts]), np.arange(len(floor), len(floor) + n_ghost)


def test_ghost_cluster_rejected(params):
    pts, ghosts = ghost_scene()
    gap = np.min(np.linalg.norm(pts[:ghosts[0], None, :2] - pts[None, ghosts, :2], axis=2))
    assert gap > 0.2
    base = baseline_segment(PointCloud(pts), IDENTITY, params)
    ours = greenseg_segment(PointCloud(pts), IDENTITY, params)
    assert np.all(base.labeled.labels[ghosts] == G)
    assert not np.any(ours.labeled.labels[ghosts] == G)


def test_flat_corridor_no_degradation(params):
    pts = grid_patch(0.4, 2.5, -0.5, 0.5, 0.01)
    base = baseline_segment(PointCloud(pts), IDENTITY, params)
    ours = greenseg_segment(PointCloud(pts), IDENTITY, params)
    interior = (pts[:, 0] > 0.45) & (pts[:, 0] < 2.45) & (np.abs(pts[:, 1]) < 0.45)
    assert np.array_equal(ours.labeled.labels[interior], base.labeled.labels[interior])


def test_step_edge_scene(params):
    low = grid_patch(0.4, 1.5, -0.5, 0.5, 0.01)
    high = grid_patch(1.5 + 1e-9, 2.5, -0.5, 0.5, 0.01, z=0.1)
    riser = np.array([[1.5, y, z] for y in np.arange(-0.5, 0.5001, 0.01)
                      for z in np.arange(0.01, 0.1, 0.01)])
    pts = np.vstack([low, high, riser])
    ours = greenseg_segment(PointCloud(pts), IDENTITY, params)
    labels = ours.labeled.labels
    edge_band = np.abs(pts[:, 0] - 1.5) < 0.005
    assert not np.any(labels[edge_band & (np.abs(pts[:, 1]) < 0.4)] == G)
    interior = (pts[:, 0] > 0.5) & (pts[:, 0] < 1.4) & (np.abs(pts[:, 1]) < 0.4)
    assert np.all(labels[interior] == G)


def test_pipeline_invariants_on_simulated_frame(params):
    from greenseg.simulate import ScenePreset, generate_frame

    fr = generate_frame(ScenePreset("crop_rows", "s4", rng_seed=2, max_range=1.8))
    ours = greenseg_segment(fr.cloud, fr.tf, params)
    base = ours.extras["baseline"]
    st_ = ours.extras["stages"]
    g_rg = set(np.flatnonzero(ours.labeled.labels == G).tolist())
    g_k = set(st_.filter.candidates.tolist())
    g_0 = set(np.flatnonzero(base.labels == G).tolist())
    assert g_rg == set(st_.region.members.tolist())
    assert g_rg <= g_k <= g_0
    # only baseline ground points may change label
    changed = np.flatnonzero(ours.labeled.labels != base.labels)
    assert np.all(base.labels[changed] == G)
    assert sum(ours.labeled.counts().values()) == len(ours.valid_index)
    assert len(ours.obstacles) == int(np.sum(ours.labeled.labels == int(SemanticLabel.OBSTACLE)))


def test_deterministic(params):
    from greenseg.simulate import ScenePreset, generate_frame

    fr = generate_frame(ScenePreset("end_turn", "s3", rng_seed=5, max_range=1.6))
    a = greenseg_segment(fr.cloud, fr.tf, params).labeled.labels
    b = greenseg_segment(fr.cloud, fr.tf, params).labeled.labels
    assert np.array_equal(a, b)


def test_no_plane_propagates_all_noise(params):
    pts = grid_patch(0.5, 1.0, -0.2, 0.2, 0.05, z=2.0)
    res = greenseg_segment(PointCloud(pts), IDENTITY, params)
    assert not res.plane_found
    assert np.all(res.labeled.labels == int(SemanticLabel.NOISE))
