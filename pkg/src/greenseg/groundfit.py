"""Baseline ground-plane-fitting segmenter."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    HORIZONTAL,
    DegenerateInput,
    LabeledCloud,
    Plane,
    PlaneNotFound,
    PointCloud,
    RigidTransform,
    SegParams,
    SemanticLabel,
)
from .preprocess import prepare

log = logging.getLogger(__name__)

# refinement stops early once the normal moves less than this
CONVERGENCE_ANGLE = math.radians(0.1)


@dataclass(frozen=True)
class FitResult:
    plane: Plane
    inliers: np.ndarray
    rms_residual: float
    iterations_used: int
    rms_history: tuple[float, ...] = ()


def signed_distance(plane: Plane, p) -> np.ndarray | float:
    """n.p + d for one point (returns float) or an (N, 3) array."""
    p = np.asarray(p, dtype=np.float64)
    out = p @ plane.normal + plane.offset
    return float(out) if out.ndim == 0 else out


def fit_plane_lsq(points) -> Plane:
    """Total least-squares plane: smallest-eigenvalue eigenvector of the
    centered scatter matrix, offset through the centroid."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals[2], 0.0)
    if scale == 0.0 or evals[1] <= 1e-12 * scale:
        raise DegenerateInput("points are collinear or coincident")
    normal = evecs[:, 0]
    normal = normal / np.linalg.norm(normal)
    return Plane(normal, -float(normal @ centroid))


def _rms(plane: Plane, pts: np.ndarray) -> float:
    return float(np.sqrt(np.mean(signed_distance(plane, pts) ** 2)))


def _angle_between(a: np.ndarray, b: np.ndarray) -> float:
    return math.acos(min(1.0, abs(float(a @ b))))


def fit_ground(points: np.ndarray, params: SegParams, seed: Plane = HORIZONTAL) -> FitResult:
    """Iteratively gather band inliers around the current plane and refit."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    plane = seed
    history = []
    used = 0
    for it in range(params.plane_iterations):
        inl = np.abs(signed_distance(plane, pts)) <= params.h_ground
        n_in = int(inl.sum())
        if n_in < 3:
            if it == 0:
                raise PlaneNotFound(f"only {n_in} point(s) in the ground band")
            break
        try:
            new = fit_plane_lsq(pts[inl])
        except DegenerateInput as exc:
            if it == 0:
                raise PlaneNotFound(str(exc)) from exc
            break
        history.append(_rms(new, pts[inl]))
        used = it + 1
        moved = _angle_between(new.normal, plane.normal)
        plane = new
        if it > 0 and moved < CONVERGENCE_ANGLE:
            break
    inliers = np.flatnonzero(np.abs(signed_distance(plane, pts)) <= params.h_ground)
    rms = _rms(plane, pts[inliers]) if len(inliers) else 0.0
    return FitResult(plane, inliers, rms, used, tuple(history))


def classify_points(cloud: PointCloud | np.ndarray, plane: Plane, params: SegParams) -> LabeledCloud:
    """Four-way labeling: ground band (if the plane is not too steep), then
    obstacle / above by absolute height, noise otherwise."""
    if isinstance(cloud, PointCloud):
        pts, frame, stamp = cloud.points, cloud.frame_id, cloud.stamp
    else:
        pts, frame, stamp = np.asarray(cloud, dtype=np.float64), "base_link", None
    labels = np.full(len(pts), int(SemanticLabel.NOISE), dtype=np.uint8)
    z = pts[:, 2]
    labels[z > params.robot_height] = SemanticLabel.ABOVE
    labels[(z > params.h_ground) & (z <= params.robot_height)] = SemanticLabel.OBSTACLE
    if plane.inclination <= params.max_incline_rad:
        ground = np.abs(signed_distance(plane, pts)) <= params.h_ground
        labels[ground] = SemanticLabel.GROUND
    return LabeledCloud(pts, labels, frame, stamp)


@dataclass
class SegmentationResult:
    """Output of a segmenter for one frame.

    Iterating yields ``(labeled, obstacles)``.
    """

    labeled: LabeledCloud
    obstacles: PointCloud
    plane: Plane | None
    valid_index: np.ndarray
    fit: FitResult | None = None
    extras: dict = field(default_factory=dict)

    @property
    def plane_found(self) -> bool:
        return self.plane is not None

    def __iter__(self):
        yield self.labeled
        yield self.obstacles


def all_noise(valid: PointCloud) -> LabeledCloud:
    return LabeledCloud(valid.points, np.full(len(valid), int(SemanticLabel.NOISE), np.uint8),
                        valid.frame_id, valid.stamp)


def baseline_from_valid(valid: PointCloud, params: SegParams) -> tuple[LabeledCloud, FitResult | None]:
    try:
        fit = fit_ground(valid.points, params)
    except PlaneNotFound as exc:
        log.info("plane not found (%s); labeling frame as noise", exc)
        return all_noise(valid), None
    return classify_points(valid, fit.plane, params), fit


def baseline_segment(cloud: PointCloud, tf: RigidTransform, params: SegParams) -> SegmentationResult:
    valid, valid_index = prepare(cloud, tf, params)
    labeled, fit = baseline_from_valid(valid, params)
    return SegmentationResult(
        labeled=labeled,
        obstacles=labeled.select(SemanticLabel.OBSTACLE),
        plane=fit.plane if fit else None,
        valid_index=valid_index,
        fit=fit,
    )
