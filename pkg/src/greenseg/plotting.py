"""Figures for benchmark runs, rendered to image files (no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = {"baseline": "#8c8c8c", "greenseg": "#2e7d32"}


def mean_iou_grid(summary: dict, path, scenarios, solar) -> Path:
    """Grouped bars of mean IoU, one panel per scenario, one group per solar profile.

    ``summary[(scenario, solar)]`` is a ``(baseline_iou, greenseg_iou)`` pair.
    """
    path = Path(path)
    fig, axes = plt.subplots(1, len(scenarios), figsize=(3.2 * len(scenarios), 3.2),
                             sharey=True, squeeze=False)
    x = np.arange(len(solar))
    w = 0.38
    for ax, sc in zip(axes[0], scenarios):
        base = [summary.get((sc, so), (np.nan, np.nan))[0] for so in solar]
        ours = [summary.get((sc, so), (np.nan, np.nan))[1] for so in solar]
        ax.bar(x - w / 2, base, w, label="baseline", color=COLORS["baseline"])
        ax.bar(x + w / 2, ours, w, label="greenseg", color=COLORS["greenseg"])
        ax.set_xticks(x, solar)
        ax.set_title(sc.replace("_", " "), fontsize=10)
        ax.set_ylim(0, 1)
        ax.grid(axis="y", alpha=0.3)
    axes[0][0].set_ylabel("mean IoU")
    axes[0][-1].legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def per_class_iou(per_class: dict, path, title: str = "") -> Path:
    """Per-class IoU bars for one benchmark cell.

    ``per_class`` maps algorithm name to ``{class_name: iou}``.
    """
    path = Path(path)
    names = list(next(iter(per_class.values())))
    x = np.arange(len(names))
    w = 0.8 / len(per_class)
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    for k, (algo, vals) in enumerate(per_class.items()):
        ax.bar(x + (k - (len(per_class) - 1) / 2) * w, [vals[n] for n in names], w,
               label=algo, color=COLORS.get(algo))
    ax.set_xticks(x, names)
    ax.set_ylim(0, 1)
    ax.set_ylabel("IoU")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def frame_times(times_ms, n_points, path, budget_ms: float = 100.0) -> Path:
    """Per-frame GreenSeg wall time against point count, with the frame budget."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    ax.scatter(n_points, times_ms, s=8, color=COLORS["greenseg"])
    ax.axhline(budget_ms, color="k", ls="--", lw=0.8, label=f"{budget_ms:g} ms budget")
    ax.set_xlabel("valid points per frame")
    ax.set_ylabel("wall time [ms]")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
