"""ASCII readers and writers for point clouds, labeled clouds and reports."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np

from .core import LABEL_CODES, GreenSegError, LabeledCloud, PointCloud

log = logging.getLogger(__name__)

LABELED_HEADER = "# greenseg-labeled v1"


class CloudParseError(GreenSegError, ValueError):
    pass


class EmptyCloudError(GreenSegError, ValueError):
    pass


def _parse_xyz_rows(lines, path, ncols_min=3):
    rows = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) < ncols_min:
            raise CloudParseError(f"{path}:{lineno}: expected {ncols_min} columns")
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise CloudParseError(f"{path}:{lineno}: non-numeric value") from None
        rows.append(vals[:3])
    return rows


def _read_ply(path: Path, lines: list[str]) -> np.ndarray:
    if not lines or lines[0].strip() != "ply":
        raise CloudParseError(f"{path}:1: missing 'ply' magic")
    n_vertex = None
    props: list[str] = []
    current = None
    end = None
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise CloudParseError(f"{path}:{i}: only ASCII PLY is supported")
        elif key == "element":
            if len(parts) != 3:
                raise CloudParseError(f"{path}:{i}: malformed element line")
            current = parts[1]
            if current == "vertex":
                try:
                    n_vertex = int(parts[2])
                except ValueError:
                    raise CloudParseError(f"{path}:{i}: bad vertex count") from None
            elif n_vertex is None:
                raise CloudParseError(f"{path}:{i}: vertex element must come first")
        elif key == "property":
            if current == "vertex":
                if parts[1] == "list":
                    raise CloudParseError(f"{path}:{i}: list properties on vertex")
                props.append(parts[-1])
        elif key == "end_header":
            end = i
            break
    if end is None:
        raise CloudParseError(f"{path}: missing end_header")
    if n_vertex is None:
        raise CloudParseError(f"{path}: no vertex element")
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise CloudParseError(f"{path}: vertex lacks x/y/z properties") from None
    body = lines[end:end + n_vertex]
    if len(body) < n_vertex:
        raise CloudParseError(f"{path}:{end + len(body) + 1}: expected {n_vertex} vertices")
    out = np.empty((n_vertex, 3))
    for k, line in enumerate(body):
        parts = line.split()
        if len(parts) < len(props):
            raise CloudParseError(f"{path}:{end + k + 1}: expected {len(props)} values")
        try:
            out[k] = [float(parts[c]) for c in cols]
        except ValueError:
            raise CloudParseError(f"{path}:{end + k + 1}: non-numeric value") from None
    return out


def _drop_nonfinite(arr: np.ndarray, path) -> np.ndarray:
    finite = np.all(np.isfinite(arr), axis=1)
    dropped = int(len(arr) - finite.sum())
    if dropped:
        log.warning("%s: dropped %d non-finite point(s)", path, dropped)
    return arr[finite]


def read_cloud(path, frame_id: str = "camera", with_dropped: bool = False):
    """Read an ASCII PLY or whitespace-delimited XYZ file.

    Non-finite rows are dropped with a logged warning. With
    ``with_dropped=True`` returns ``(cloud, n_dropped)``.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if lines and lines[0].strip() == "ply":
        arr = _read_ply(path, lines)
    else:
        arr = np.array(_parse_xyz_rows(lines, path), dtype=np.float64).reshape(-1, 3)
    n_raw = len(arr)
    arr = _drop_nonfinite(arr, path)
    if len(arr) == 0:
        raise EmptyCloudError(f"{path}: cloud has no valid points")
    cloud = PointCloud(arr, frame_id)
    if with_dropped:
        return cloud, n_raw - len(arr)
    return cloud


def write_ply(path, cloud: PointCloud) -> None:
    """ASCII PLY with full float64 round-trip precision."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"comment frame_id {cloud.frame_id}\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for x, y, z in cloud.points.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def write_labeled(path, cloud: LabeledCloud) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(LABELED_HEADER + "\n")
        fh.write(f"# frame_id {cloud.frame_id}\n")
        if cloud.stamp is not None:
            fh.write(f"# stamp {float(cloud.stamp)!r}\n")
        for (x, y, z), lbl in zip(cloud.points.tolist(), cloud.labels.tolist()):
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {int(lbl)}\n")


def read_labeled(path) -> LabeledCloud:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != LABELED_HEADER:
        raise CloudParseError(f"{path}:1: expected header {LABELED_HEADER!r}")
    frame_id, stamp = "base_link", None
    pts, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            meta = s[1:].split()
            if len(meta) == 2 and meta[0] == "frame_id":
                frame_id = meta[1]
            elif len(meta) == 2 and meta[0] == "stamp":
                stamp = float(meta[1])
            continue
        parts = s.split()
        if len(parts) != 4:
            raise CloudParseError(f"{path}:{lineno}: expected 'x y z label'")
        try:
            xyz = [float(v) for v in parts[:3]]
            code = int(parts[3])
        except ValueError:
            raise CloudParseError(f"{path}:{lineno}: bad number") from None
        if code not in LABEL_CODES:
            raise CloudParseError(f"{path}:{lineno}: unknown label code {code}")
        if not all(math.isfinite(v) for v in xyz):
            raise CloudParseError(f"{path}:{lineno}: non-finite coordinate")
        pts.append(xyz)
        labels.append(code)
    return LabeledCloud(np.array(pts, dtype=np.float64).reshape(-1, 3),
                        np.array(labels, dtype=np.uint8), frame_id, stamp)


def write_metrics_csv(path, rows) -> None:
    """rows: iterable of (name, precision, recall, f1, iou); NaN written as empty."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "precision", "recall", "f1", "iou"])
        for name, *vals in rows:
            writer.writerow([name] + ["" if v is None or (isinstance(v, float) and math.isnan(v))
                                      else f"{v:.6f}" for v in vals])


def read_metrics_csv(path) -> dict[str, tuple[float, ...]]:
    out = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["class"]] = tuple(float(row[k]) if row[k] else math.nan
                                      for k in ("precision", "recall", "f1", "iou"))
    return out
