"""Seeded region growing over the filtered ground candidates, and the
two-layer GreenSeg pipeline built on top of the baseline segmenter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import (
    EmptyCandidates,
    LabeledCloud,
    Plane,
    PointCloud,
    RigidTransform,
    SegParams,
    SemanticLabel,
)
from .groundfit import SegmentationResult, baseline_from_valid, signed_distance
from .localgeom import FilterResult, SpatialIndex, geometric_filter, split_label
from .preprocess import planar_radius, prepare


@dataclass(frozen=True)
class Region:
    members: np.ndarray
    seed_index: int

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, idx) -> bool:
        k = np.searchsorted(self.members, idx)
        return bool(k < len(self.members) and self.members[k] == idx)


EMPTY_REGION = Region(np.empty(0, dtype=np.intp), -1)


def select_seed(points: np.ndarray, candidates) -> int:
    """Candidate with the smallest xy distance to the origin; ties go to the
    smallest point index."""
    cand = np.sort(np.asarray(candidates, dtype=np.intp))
    if len(cand) == 0:
        raise EmptyCandidates("no ground candidates to seed from")
    r = planar_radius(np.asarray(points)[cand])
    return int(cand[int(np.argmin(r))])


def grow_region(points: np.ndarray, candidates, rho, plane: Plane, seed: int,
                params: SegParams, index: SpatialIndex | None = None) -> Region:
    """Grow the ground region outward from ``seed``.

    A candidate joins when it lies within the ground band of ``plane``, its
    consistency score is at least ``rho_min`` and it is within ``r_growing``
    of a current member. ``rho`` is aligned with ``candidates``. The result
    is the seed's connected component among the admissible candidates, so
    it does not depend on candidate order. An ``index`` built over
    ``points`` lets the neighbor pairs be shared with earlier stages.
    """
    points = np.asarray(points, dtype=np.float64)
    cand = np.asarray(candidates, dtype=np.intp)
    rho = np.asarray(rho, dtype=np.float64)
    order = np.argsort(cand, kind="stable")
    cand, rho = cand[order], rho[order]
    if not np.any(cand == seed):
        raise ValueError(f"seed {seed} is not a candidate")

    ok = (np.abs(signed_distance(plane, points[cand])) <= params.h_ground) & (rho >= params.rho_min)
    ok[cand == seed] = True
    elig = cand[ok]
    n = len(elig)
    local_seed = int(np.searchsorted(elig, seed))

    if index is not None and len(index) != len(points):
        raise ValueError("index does not cover the given points")
    if index is None:
        i, j = SpatialIndex(points[elig]).pairs(params.r_growing)
    else:
        # pairs within the eligible subset are the full-set pairs restricted to it
        local = np.full(len(points), -1, dtype=np.intp)
        local[elig] = np.arange(n)
        gi, gj = index.pairs(params.r_growing)
        li, lj = local[gi], local[gj]
        keep = (li >= 0) & (lj >= 0)
        i, j = li[keep], lj[keep]
    graph = coo_matrix((np.ones(len(i), dtype=np.int8), (i, j)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    return Region(elig[comp == comp[local_seed]], seed)


def finalize_labels(baseline: LabeledCloud, region: Region, filt: FilterResult,
                    params: SegParams) -> tuple[LabeledCloud, PointCloud]:
    """Keep the region as ground and demote every other baseline ground point.

    Points that failed the local checks take their recorded label; candidates
    the region never reached are split by curvature the same way.
    """
    labels = baseline.labels.copy()
    labels[filt.reclass_index] = filt.reclass_labels
    in_region = np.isin(filt.candidates, region.members, assume_unique=True)
    orphans = filt.candidates[~in_region]
    labels[orphans] = split_label(filt.kappa[filt.lookup(orphans)], params)
    verified = LabeledCloud(baseline.points, labels, baseline.frame_id, baseline.stamp)
    return verified, verified.select(SemanticLabel.OBSTACLE)


@dataclass(frozen=True)
class GreenSegStages:
    filter: FilterResult
    region: Region


def verify_ground(valid: PointCloud, baseline: LabeledCloud, plane: Plane,
                  params: SegParams) -> tuple[LabeledCloud, PointCloud, GreenSegStages]:
    """Second-layer validation of a baseline labeling."""
    index = SpatialIndex(valid.points)
    filt = geometric_filter(baseline, plane, index, params)
    try:
        seed = select_seed(valid.points, filt.candidates)
    except EmptyCandidates:
        region = EMPTY_REGION
    else:
        rho = filt.rho[filt.lookup(filt.candidates)]
        region = grow_region(valid.points, filt.candidates, rho, plane, seed, params, index)
    verified, obstacles = finalize_labels(baseline, region, filt, params)
    return verified, obstacles, GreenSegStages(filt, region)


def greenseg_segment(cloud: PointCloud, tf: RigidTransform, params: SegParams) -> SegmentationResult:
    valid, valid_index = prepare(cloud, tf, params)
    baseline, fit = baseline_from_valid(valid, params)
    if fit is None:
        return SegmentationResult(baseline, baseline.select(SemanticLabel.OBSTACLE),
                                  None, valid_index, None)
    verified, obstacles, stages = verify_ground(valid, baseline, fit.plane, params)
    return SegmentationResult(
        labeled=verified,
        obstacles=obstacles,
        plane=fit.plane,
        valid_index=valid_index,
        fit=fit,
        extras={"baseline": baseline, "stages": stages},
    )
