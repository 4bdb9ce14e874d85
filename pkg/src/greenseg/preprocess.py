"""Sensor-to-base transform and distance pre-filters."""

from __future__ import annotations

import bisect

import numpy as np

from .core import PointCloud, RigidTransform, SegParams

BASE_FRAME = "base_link"


def transform_to_base(cloud: PointCloud, tf: RigidTransform) -> PointCloud:
    if len(cloud) == 0:
        raise ValueError("cannot transform an empty cloud")
    return PointCloud(tf.apply(cloud.points), BASE_FRAME, cloud.stamp)


def planar_radius(points: np.ndarray) -> np.ndarray:
    return np.hypot(points[:, 0], points[:, 1])


def radial_prefilter(cloud: PointCloud, d_min: float) -> PointCloud:
    """Keep points with xy-radius >= d_min (boundary inclusive)."""
    return cloud.subset(planar_radius(cloud.points) >= d_min)


def range_filter(cloud: PointCloud, d_max: float, metric: str = "planar") -> PointCloud:
    """Keep points with radius <= d_max; radius is xy-planar or full euclidean."""
    if metric == "planar":
        r = planar_radius(cloud.points)
    elif metric == "euclidean":
        r = np.linalg.norm(cloud.points, axis=1)
    else:
        raise ValueError(f"unknown range metric {metric!r}")
    return cloud.subset(r <= d_max)


def valid_mask(points: np.ndarray, params: SegParams) -> np.ndarray:
    """Mask of points surviving both filters, in one pass."""
    r = planar_radius(points)
    keep = r >= params.min_distance
    if params.range_metric == "euclidean":
        keep &= np.linalg.norm(points, axis=1) <= params.max_distance
    else:
        keep &= r <= params.max_distance
    return keep


def prepare(cloud: PointCloud, tf: RigidTransform, params: SegParams) -> tuple[PointCloud, np.ndarray]:
    """Transform then filter. Returns the valid cloud and indices into the input."""
    base = transform_to_base(cloud, tf)
    keep = valid_mask(base.points, params)
    return base.subset(keep), np.flatnonzero(keep)


class TransformTable:
    """Stamp-keyed transforms for batch replays.

    ``lookup(t)`` returns the latest transform whose stamp is <= t.
    """

    def __init__(self, entries=()):
        self._stamps: list[float] = []
        self._tfs: list[RigidTransform] = []
        for stamp, tf in sorted(entries, key=lambda e: e[0]):
            self.add(stamp, tf)

    def add(self, stamp: float, tf: RigidTransform) -> None:
        i = bisect.bisect_right(self._stamps, stamp)
        self._stamps.insert(i, float(stamp))
        self._tfs.insert(i, tf)

    def lookup(self, stamp: float) -> RigidTransform:
        i = bisect.bisect_right(self._stamps, stamp)
        if i == 0:
            raise KeyError(f"no transform at or before stamp {stamp}")
        return self._tfs[i - 1]

    def __len__(self) -> int:
        return len(self._stamps)
