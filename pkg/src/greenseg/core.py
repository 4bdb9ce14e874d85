"""Shared domain types and configuration for ground segmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import IntEnum
from pathlib import Path

import numpy as np


class GreenSegError(Exception):
    """Base class for toolkit errors."""


class ConfigError(GreenSegError, ValueError):
    pass


class DegenerateInput(GreenSegError, ValueError):
    pass


class PlaneNotFound(GreenSegError):
    pass


class EmptyCandidates(GreenSegError):
    pass


class SemanticLabel(IntEnum):
    GROUND = 0
    OBSTACLE = 1
    ABOVE = 2
    NOISE = 3
    UNDEFINED = 255


#: the four classes a segmenter may emit, in report order
CLASSES = (
    SemanticLabel.GROUND,
    SemanticLabel.OBSTACLE,
    SemanticLabel.ABOVE,
    SemanticLabel.NOISE,
)
LABEL_CODES = frozenset(int(lbl) for lbl in SemanticLabel)


def _frozen_points(points) -> np.ndarray:
    arr = np.array(points, dtype=np.float64, copy=True)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"points must have shape (N, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An (N, 3) array of finite points in meters, tagged with a frame."""

    points: np.ndarray
    frame_id: str = "base_link"
    stamp: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen_points(self.points))
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, mask_or_index) -> "PointCloud":
        return PointCloud(self.points[mask_or_index], self.frame_id, self.stamp)


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    points: np.ndarray
    labels: np.ndarray
    frame_id: str = "base_link"
    stamp: float | None = None

    def __post_init__(self):
        pts = _frozen_points(self.points)
        labels = np.array(self.labels, dtype=np.uint8, copy=True).reshape(-1)
        if len(labels) != len(pts):
            raise ValueError(
                f"{len(labels)} labels for {len(pts)} points"
            )
        bad = set(np.unique(labels).tolist()) - LABEL_CODES
        if bad:
            raise ValueError(f"unknown label codes {sorted(bad)}")
        labels.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")

    def __len__(self) -> int:
        return len(self.points)

    def mask(self, label: SemanticLabel) -> np.ndarray:
        return self.labels == int(label)

    def select(self, label: SemanticLabel) -> PointCloud:
        return PointCloud(self.points[self.mask(label)], self.frame_id, self.stamp)

    def counts(self) -> dict[SemanticLabel, int]:
        return {lbl: int(np.count_nonzero(self.mask(lbl))) for lbl in CLASSES}


@dataclass(frozen=True)
class RigidTransform:
    """p_out = rotation @ p + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64, copy=True).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64, copy=True).reshape(3)
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("transform entries must be finite")
        if not np.allclose(rot.T @ rot, np.eye(3), rtol=0.0, atol=1e-9):
            raise ValueError("rotation columns are not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def from_rpy(cls, roll=0.0, pitch=0.0, yaw=0.0, translation=(0.0, 0.0, 0.0),
                 degrees=True) -> "RigidTransform":
        """Build from fixed-axis roll/pitch/yaw (R = Rz(yaw) Ry(pitch) Rx(roll))."""
        if degrees:
            roll, pitch, yaw = map(math.radians, (roll, pitch, yaw))
        cr, sr = math.cos(roll), math.sin(roll)
        cp, sp = math.cos(pitch), math.sin(pitch)
        cy, sy = math.cos(yaw), math.sin(yaw)
        rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
        rot = rz @ ry @ rx
        # re-orthonormalize so composition round-off never trips validation
        u, _, vt = np.linalg.svd(rot)
        return cls(u @ vt, translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -rot_t @ self.translation)


@dataclass(frozen=True)
class Plane:
    """Plane n.p + d = 0 with unit normal, canonicalized to n_z >= 0."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.array(self.normal, dtype=np.float64, copy=True).reshape(3)
        norm = float(np.linalg.norm(n))
        if not math.isfinite(norm) or norm == 0.0:
            raise ValueError("plane normal must be a non-zero finite vector")
        offset = float(self.offset)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"plane normal must be unit length, |n| = {norm}")
        if n[2] < 0:
            n, offset = -n, -offset
        n.flags.writeable = False
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def from_normal(cls, normal, offset: float) -> "Plane":
        """Normalize an arbitrary-length normal (and scale the offset with it)."""
        n = np.asarray(normal, dtype=np.float64)
        norm = float(np.linalg.norm(n))
        return cls(n / norm, offset / norm)

    @property
    def inclination(self) -> float:
        """Angle between the normal and +z, radians."""
        return math.acos(min(1.0, max(-1.0, float(self.normal[2]))))


HORIZONTAL = Plane(np.array([0.0, 0.0, 1.0]), 0.0)


# config-file key -> SegParams field
CONFIG_KEYS = {
    "max_surface_height": "h_ground",
    "max_incline": "max_incline",
    "robot_height": "robot_height",
    "n_neighbors": "n_neighbors_min",
    "r_neighbors": "r_neighbors",
    "rho_min": "rho_min",
    "kappa_max": "kappa_max",
    "r_growing": "r_growing",
    "max_distance_filtered": "max_distance",
    "min_distance_filtered": "min_distance",
    "plane_iterations": "plane_iterations",
    "noise_kappa_split": "noise_kappa_split",
    "range_metric": "range_metric",
}
RANGE_METRICS = ("planar", "euclidean")


@dataclass(frozen=True)
class SegParams:
    """Segmentation thresholds. Lengths in meters, max_incline in degrees."""

    h_ground: float = 0.12
    max_incline: float = 30.0
    robot_height: float = 0.5
    n_neighbors_min: int = 30
    r_neighbors: float = 0.05
    rho_min: float = 0.90
    kappa_max: float = 0.05
    r_growing: float = 0.05
    max_distance: float = 3.0
    min_distance: float = 0.3
    plane_iterations: int = 3
    # None means "same as kappa_max"
    noise_kappa_split: float | None = None
    range_metric: str = "planar"

    @property
    def kappa_split(self) -> float:
        if self.noise_kappa_split is None:
            return self.kappa_max
        return self.noise_kappa_split

    @property
    def max_incline_rad(self) -> float:
        return math.radians(self.max_incline)

    def replace(self, **changes) -> "SegParams":
        return replace(self, **changes)


def validate_params(params: SegParams) -> SegParams:
    """Return ``params`` unchanged or raise ConfigError naming the first bad field."""
    for name in ("h_ground", "robot_height", "r_neighbors", "r_growing",
                 "max_distance", "min_distance"):
        value = getattr(params, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise ConfigError(f"{name} must be a positive length, got {value!r}")
    if not params.min_distance < params.max_distance:
        raise ConfigError(
            f"min_distance ({params.min_distance}) must be below "
            f"max_distance ({params.max_distance})"
        )
    if not 0 < params.max_incline < 90:
        raise ConfigError(f"max_incline out of (0,90), got {params.max_incline}")
    if not 0 < params.rho_min <= 1:
        raise ConfigError(f"rho_min out of (0,1], got {params.rho_min}")
    if not 0 < params.kappa_max <= 1 / 3:
        raise ConfigError(f"kappa_max out of (0,1/3], got {params.kappa_max}")
    for name in ("n_neighbors_min", "plane_iterations"):
        value = getattr(params, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    split = params.noise_kappa_split
    if split is not None and not (math.isfinite(split) and 0 <= split <= 1 / 3):
        raise ConfigError(f"noise_kappa_split out of [0,1/3], got {split}")
    if params.range_metric not in RANGE_METRICS:
        raise ConfigError(
            f"range_metric must be one of {RANGE_METRICS}, got {params.range_metric!r}"
        )
    return params


def parse_key_values(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` (or ``key: value`` / ``key value``) lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = line.split(sep, 1)
                break
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, value = parts
        key, value = key.strip(), value.strip()
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def params_from_mapping(mapping: dict[str, str], source: str = "<config>") -> SegParams:
    types = {f.name: f.type for f in fields(SegParams)}
    kwargs = {}
    for key, raw in mapping.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        name = CONFIG_KEYS[key]
        try:
            if name == "range_metric":
                value = raw
            elif name == "noise_kappa_split" and raw.lower() in ("", "none", "kappa_max"):
                value = None
            elif "int" in types[name]:
                value = int(raw)
            else:
                value = float(raw)
        except ValueError:
            raise ConfigError(f"{source}: bad value for {key!r}: {raw!r}") from None
        kwargs[name] = value
    return validate_params(SegParams(**kwargs))


def load_params(path: str | Path) -> SegParams:
    path = Path(path)
    return params_from_mapping(parse_key_values(path.read_text(), str(path)), str(path))


def dump_params(params: SegParams) -> str:
    inverse = {v: k for k, v in CONFIG_KEYS.items()}
    lines = []
    for f in fields(SegParams):
        value = getattr(params, f.name)
        lines.append(f"{inverse[f.name]} = {'kappa_max' if value is None else value}")
    return "\n".join(lines) + "\n"


def load_transform(path: str | Path) -> RigidTransform:
    """Read a transform file.

    Keys: ``translation = x y z`` plus either ``rotation`` (nine row-major
    entries) or ``rpy_deg = roll pitch yaw``. Missing rotation means identity.
    """
    path = Path(path)
    kv = parse_key_values(path.read_text(), str(path))
    unknown = set(kv) - {"translation", "rotation", "rpy_deg"}
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    if "rotation" in kv and "rpy_deg" in kv:
        raise ConfigError(f"{path}: give either rotation or rpy_deg, not both")
    try:
        trans = [float(v) for v in kv.get("translation", "0 0 0").split()]
        if len(trans) != 3:
            raise ConfigError(f"{path}: translation needs 3 values")
        if "rpy_deg" in kv:
            rpy = [float(v) for v in kv["rpy_deg"].split()]
            if len(rpy) != 3:
                raise ConfigError(f"{path}: rpy_deg needs 3 values")
            return RigidTransform.from_rpy(*rpy, translation=trans)
        rot = [float(v) for v in kv.get("rotation", "1 0 0 0 1 0 0 0 1").split()]
        if len(rot) != 9:
            raise ConfigError(f"{path}: rotation needs 9 values")
        return RigidTransform(np.reshape(rot, (3, 3)), trans)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None


def dump_transform(tf: RigidTransform) -> str:
    rot = " ".join(repr(float(v)) for v in tf.rotation.ravel())
    trans = " ".join(repr(float(v)) for v in tf.translation)
    return f"translation = {trans}\nrotation = {rot}\n"
