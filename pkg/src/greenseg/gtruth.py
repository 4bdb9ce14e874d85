"""Automatic ground truth from temporal label consistency on a voxel grid."""

from __future__ import annotations

from collections import Counter, deque
from pathlib import Path

import numpy as np

from .core import GreenSegError, LabeledCloud, SemanticLabel

VoxelKey = tuple[int, int, int]
GT_HEADER = "# greenseg-gt v1"


def voxel_keys(points: np.ndarray, resolution: float) -> np.ndarray:
    """(N, 3) integer voxel indices, floor(p / resolution)."""
    return np.floor(np.asarray(points, dtype=np.float64) / resolution).astype(np.int64)


def frame_votes(labeled: LabeledCloud, resolution: float) -> dict[VoxelKey, SemanticLabel]:
    """Point-majority label per occupied voxel; a tied majority votes UNDEFINED."""
    keys = voxel_keys(labeled.points, resolution)
    if len(keys) == 0:
        return {}
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    codes = labeled.labels.astype(np.int64)
    # one row per voxel, one column per label code
    table = np.zeros((len(uniq), 256), dtype=np.int64)
    np.add.at(table, (inverse, codes), 1)
    best = table.max(axis=1)
    winners = table.argmax(axis=1)
    tied = (table == best[:, None]).sum(axis=1) > 1
    votes = {}
    for key, win, tie in zip(map(tuple, uniq.tolist()), winners.tolist(), tied.tolist()):
        votes[key] = SemanticLabel.UNDEFINED if tie else SemanticLabel(win)
    return votes


class GtAccumulator:
    """Per-voxel votes over the last ``window`` frames."""

    def __init__(self, resolution: float = 0.05, window: int = 10):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        if window < 1:
            raise ValueError("window must be at least one frame")
        self.resolution = float(resolution)
        self.window = int(window)
        self.frames_seen = 0
        self._votes: dict[VoxelKey, deque] = {}

    def accumulate_frame(self, labeled: LabeledCloud) -> "GtAccumulator":
        frame_no = self.frames_seen
        for key, vote in frame_votes(labeled, self.resolution).items():
            buf = self._votes.get(key)
            if buf is None:
                buf = self._votes[key] = deque(maxlen=self.window)
            buf.append((frame_no, vote))
        self.frames_seen += 1
        oldest = self.frames_seen - self.window
        for key in list(self._votes):
            buf = self._votes[key]
            while buf and buf[0][0] < oldest:
                buf.popleft()
            if not buf:
                del self._votes[key]
        return self

    def votes(self, key: VoxelKey) -> list[SemanticLabel]:
        return [v for _, v in self._votes.get(tuple(key), ())]

    def keys(self):
        return self._votes.keys()

    def extract_ground_truth(self, psi_min: float = 0.9) -> "GroundTruthMap":
        if self.frames_seen == 0:
            raise GreenSegError("accumulator has no frames")
        labels = {}
        for key, buf in self._votes.items():
            labels[key] = _agreed_label([v for _, v in buf], self.window, psi_min)
        return GroundTruthMap(labels, self.resolution, self.window, psi_min)


def _agreed_label(votes, window: int, psi_min: float) -> SemanticLabel:
    if len(votes) < window:
        return SemanticLabel.UNDEFINED
    label, count = Counter(votes).most_common(1)[0]
    if label is SemanticLabel.UNDEFINED:
        return SemanticLabel.UNDEFINED
    # inclusive threshold; the slack absorbs psi_min * n round-off
    if count >= psi_min * len(votes) - 1e-9:
        return label
    return SemanticLabel.UNDEFINED


def accumulate_frame(acc: GtAccumulator, labeled: LabeledCloud) -> GtAccumulator:
    return acc.accumulate_frame(labeled)


def extract_ground_truth(acc: GtAccumulator, psi_min: float = 0.9) -> "GroundTruthMap":
    return acc.extract_ground_truth(psi_min)


class GroundTruthMap(dict):
    """VoxelKey -> SemanticLabel, with the grid settings that produced it."""

    def __init__(self, labels, resolution: float, window: int, psi_min: float):
        super().__init__(labels)
        self.resolution = resolution
        self.window = window
        self.psi_min = psi_min

    def defined(self) -> dict[VoxelKey, SemanticLabel]:
        return {k: v for k, v in self.items() if v is not SemanticLabel.UNDEFINED}

    def labels_for(self, points: np.ndarray) -> np.ndarray:
        """Per-point GT labels; points in unknown voxels get UNDEFINED."""
        keys = voxel_keys(points, self.resolution)
        undefined = int(SemanticLabel.UNDEFINED)
        return np.array([int(self.get(k, undefined)) for k in map(tuple, keys.tolist())],
                        dtype=np.uint8)

    def write(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write(f"{GT_HEADER}\n# resolution {float(self.resolution)!r}\n"
                     f"# window {self.window}\n# psi_min {float(self.psi_min)!r}\n")
            for key in sorted(self):
                fh.write(f"{key[0]} {key[1]} {key[2]} {int(self[key])}\n")

    @classmethod
    def read(cls, path) -> "GroundTruthMap":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0].strip() != GT_HEADER:
            raise GreenSegError(f"{path}:1: expected header {GT_HEADER!r}")
        meta, labels = {}, {}
        for lineno, line in enumerate(lines[1:], start=2):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                parts = s[1:].split()
                if len(parts) == 2:
                    meta[parts[0]] = parts[1]
                continue
            parts = s.split()
            try:
                ix, iy, iz, code = (int(v) for v in parts)
                labels[(ix, iy, iz)] = SemanticLabel(code)
            except ValueError:
                raise GreenSegError(f"{path}:{lineno}: expected 'ix iy iz label'") from None
        try:
            return cls(labels, float(meta["resolution"]), int(meta["window"]),
                       float(meta["psi_min"]))
        except KeyError as exc:
            raise GreenSegError(f"{path}: header lacks {exc.args[0]}") from None
