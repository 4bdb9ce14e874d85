"""Per-class confusion counts, P/R/F1/IoU, class means and relative improvement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CLASSES, GreenSegError, LabeledCloud, SemanticLabel

METRIC_NAMES = ("precision", "recall", "f1", "iou")


class DisjointDomains(GreenSegError, ValueError):
    pass


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __add__(self, other: "ClassCounts") -> "ClassCounts":
        return ClassCounts(self.tp + other.tp, self.fp + other.fp,
                           self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassMetrics:
    """NaN marks a metric whose denominator was zero."""

    precision: float
    recall: float
    f1: float
    iou: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.precision, self.recall, self.f1, self.iou)


def _as_labels(x) -> np.ndarray:
    if isinstance(x, LabeledCloud):
        return x.labels
    return np.asarray(x, dtype=np.int64).reshape(-1)


def _align(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pred, dict) or isinstance(gt, dict):
        if not (isinstance(pred, dict) and isinstance(gt, dict)):
            raise TypeError("pred and gt must both be label maps or both be sequences")
        keys = [k for k in pred if k in gt]
        if not keys:
            raise DisjointDomains("pred and gt share no keys")
        return (np.array([int(pred[k]) for k in keys]),
                np.array([int(gt[k]) for k in keys]))
    p, g = _as_labels(pred), _as_labels(gt)
    if len(p) != len(g):
        raise ValueError(f"{len(p)} predictions for {len(g)} ground-truth labels")
    if len(p) == 0:
        raise DisjointDomains("nothing to compare")
    return p, g


def confusion(pred, gt) -> dict[SemanticLabel, ClassCounts]:
    """One-vs-rest counts per class; ground-truth UNDEFINED entries are skipped.

    ``pred`` and ``gt`` are aligned label sequences (or LabeledClouds), or two
    dicts keyed by a shared domain such as voxel keys.
    """
    p, g = _align(pred, gt)
    keep = g != int(SemanticLabel.UNDEFINED)
    if not keep.any():
        raise DisjointDomains("every ground-truth entry is undefined")
    p, g = p[keep], g[keep]
    n = len(p)
    out = {}
    for k in CLASSES:
        pk, gk = p == int(k), g == int(k)
        tp = int(np.count_nonzero(pk & gk))
        fp = int(np.count_nonzero(pk & ~gk))
        fn = int(np.count_nonzero(~pk & gk))
        out[k] = ClassCounts(tp, fp, fn, n - tp - fp - fn)
    return out


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


def class_metrics(c: ClassCounts) -> ClassMetrics:
    return ClassMetrics(
        precision=_ratio(c.tp, c.tp + c.fp),
        recall=_ratio(c.tp, c.tp + c.fn),
        f1=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        iou=_ratio(c.tp, c.tp + c.fp + c.fn),
    )


def per_class(counts: dict[SemanticLabel, ClassCounts]) -> dict[SemanticLabel, ClassMetrics]:
    return {k: class_metrics(c) for k, c in counts.items()}


def pool(counts_list) -> dict[SemanticLabel, ClassCounts]:
    """Sum per-class counts over frames (micro averaging)."""
    out = {k: ClassCounts(0, 0, 0, 0) for k in CLASSES}
    for counts in counts_list:
        for k, c in counts.items():
            out[k] = out[k] + c
    return out


def macro_over_frames(metrics_list) -> dict[SemanticLabel, ClassMetrics]:
    """Average each class metric over frames, ignoring frames where it is undefined."""
    out = {}
    for k in CLASSES:
        vals = np.array([m[k].as_tuple() for m in metrics_list if k in m], dtype=np.float64)
        if len(vals) == 0:
            out[k] = ClassMetrics(*(math.nan,) * 4)
            continue
        with np.errstate(invalid="ignore"):
            means = [float(np.nanmean(col)) if np.any(~np.isnan(col)) else math.nan
                     for col in vals.T]
        out[k] = ClassMetrics(*means)
    return out


def class_means(metrics: dict) -> tuple[dict[str, float], int]:
    """Mean of each metric over classes where it is defined.

    Returns the means and the number of classes excluded because at least
    one of their metrics was undefined.
    """
    means = {}
    excluded = sum(1 for m in metrics.values() if any(math.isnan(v) for v in m.as_tuple()))
    for pos, name in enumerate(METRIC_NAMES):
        vals = [m.as_tuple()[pos] for m in metrics.values()]
        vals = [v for v in vals if not math.isnan(v)]
        means[name] = sum(vals) / len(vals) if vals else math.nan
    return means, excluded


def improvement_pct(base: float, ours: float) -> float:
    """Relative change of ``ours`` over ``base`` in percent."""
    if base == 0 or math.isnan(base) or math.isnan(ours):
        return math.nan
    return (ours - base) / base * 100.0


@dataclass(frozen=True)
class Report:
    ours: dict
    base: dict
    mean_ours: dict[str, float]
    mean_base: dict[str, float]
    improvement: dict[str, float]
    excluded_ours: int
    excluded_base: int

    def improvement_display(self) -> dict[str, str]:
        return {k: f"{v:+.2f}%" for k, v in self.improvement.items()}

    def rows(self, which: str = "ours"):
        """CSV rows: one per class, then ``mean`` and ``improvement_pct``."""
        per = self.ours if which == "ours" else self.base
        mean = self.mean_ours if which == "ours" else self.mean_base
        for k, m in per.items():
            name = k.name.lower() if isinstance(k, SemanticLabel) else str(k)
            yield (name, *m.as_tuple())
        yield ("mean", *(mean[n] for n in METRIC_NAMES))
        yield ("improvement_pct", *(self.improvement[n] for n in METRIC_NAMES))


def summarize(per_class_ours: dict, per_class_base: dict) -> Report:
    if set(per_class_ours) != set(per_class_base):
        raise ValueError("both reports must cover the same classes")
    mean_o, ex_o = class_means(per_class_ours)
    mean_b, ex_b = class_means(per_class_base)
    return Report(
        ours=per_class_ours,
        base=per_class_base,
        mean_ours=mean_o,
        mean_base=mean_b,
        improvement={n: improvement_pct(mean_b[n], mean_o[n]) for n in METRIC_NAMES},
        excluded_ours=ex_o,
        excluded_base=ex_b,
    )
