"""Ground segmentation for greenhouse point clouds: a plane-fitting baseline
and a second validation layer (normal consistency, curvature, region growing)."""

from .core import (
    ConfigError,
    DegenerateInput,
    EmptyCandidates,
    LabeledCloud,
    Plane,
    PlaneNotFound,
    PointCloud,
    RigidTransform,
    SegParams,
    SemanticLabel,
    load_params,
    validate_params,
)
from .groundfit import baseline_segment
from .regiongrow import greenseg_segment

__all__ = [
    "ConfigError",
    "DegenerateInput",
    "EmptyCandidates",
    "LabeledCloud",
    "Plane",
    "PlaneNotFound",
    "PointCloud",
    "RigidTransform",
    "SegParams",
    "SemanticLabel",
    "baseline_segment",
    "greenseg_segment",
    "load_params",
    "validate_params",
]

__version__ = "0.1.0"
