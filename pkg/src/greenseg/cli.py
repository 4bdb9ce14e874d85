"""Command-line front end: segment, evaluate, simulate, bench."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cloudio
from .core import (
    CLASSES,
    GreenSegError,
    LabeledCloud,
    RigidTransform,
    SegParams,
    SemanticLabel,
    dump_transform,
    load_params,
    load_transform,
)
from .groundfit import baseline_segment
from .gtruth import GT_HEADER, GroundTruthMap
from .metrics import (
    METRIC_NAMES,
    Report,
    confusion,
    macro_over_frames,
    per_class,
    pool,
    summarize,
)
from .preprocess import transform_to_base
from .regiongrow import greenseg_segment
from .simulate import SCENARIOS, SOLAR, ScenePreset, generate_frame, generate_sequence

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_PLANE = 3

SEGMENTERS = {"baseline": baseline_segment, "greenseg": greenseg_segment}
IDENTITY = RigidTransform(np.eye(3), np.zeros(3))


class UsageError(GreenSegError):
    """Bad or missing input; maps to exit code 2."""


def _params(path) -> SegParams:
    return load_params(path) if path else SegParams()


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file or directory: {p}")
    return p


def _frame_key(path: Path) -> str:
    return path.name.split(".", 1)[0]


def _label_files(path: Path) -> dict[str, Path]:
    """Labeled-cloud files of a directory keyed by frame name (obstacle files skipped)."""
    if path.is_file():
        return {_frame_key(path): path}
    return {_frame_key(p): p for p in sorted(path.glob("*.txt"))
            if not p.name.endswith(".obstacle.txt")}


# --------------------------------------------------------------------------
# segment


def _cloud_inputs(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    files = sorted(p for p in path.iterdir()
                   if p.suffix in (".ply", ".xyz") and p.is_file())
    if not files:
        raise UsageError(f"{path}: no .ply or .xyz clouds found")
    return files


def _frame_tf(cloud_path: Path, default: RigidTransform) -> RigidTransform:
    # a sibling <frame>.tf.cfg overrides the shared transform
    own = cloud_path.with_name(_frame_key(cloud_path) + ".tf.cfg")
    return load_transform(own) if own.exists() else default


def _outputs(out: Path, cloud_path: Path, many: bool) -> tuple[Path, Path]:
    if many:
        out.mkdir(parents=True, exist_ok=True)
        labeled = out / f"{_frame_key(cloud_path)}.txt"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        labeled = out
    stem = labeled.name[:-len(labeled.suffix)] if labeled.suffix else labeled.name
    return labeled, labeled.with_name(stem + ".obstacle.txt")


def cmd_segment(args) -> int:
    params = _params(args.params)
    shared_tf = load_transform(args.tf) if args.tf else IDENTITY
    inputs = _cloud_inputs(_require(args.cloud))
    segment = SEGMENTERS[args.algo]
    many = len(inputs) > 1 or Path(args.cloud).is_dir()
    out = Path(args.out)
    n_found = 0
    totals = dict.fromkeys(CLASSES, 0)
    for path in inputs:
        cloud = cloudio.read_cloud(path)
        result = segment(cloud, _frame_tf(path, shared_tf), params)
        n_found += result.plane_found
        labeled_path, obstacle_path = _outputs(out, path, many)
        cloudio.write_labeled(labeled_path, result.labeled)
        obstacles = result.obstacles
        cloudio.write_labeled(obstacle_path, LabeledCloud(
            obstacles.points, np.full(len(obstacles), int(SemanticLabel.OBSTACLE), np.uint8),
            obstacles.frame_id, obstacles.stamp))
        counts = result.labeled.counts()
        for k in CLASSES:
            totals[k] += counts[k]
        if many:
            print(f"{path.name}: " + " ".join(f"{k.name.lower()}={counts[k]}" for k in CLASSES))
    for k in CLASSES:
        print(f"{k.name.lower():9s} {totals[k]}")
    if n_found == 0:
        print("error: no ground plane found in any frame", file=sys.stderr)
        return EXIT_NO_PLANE
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluate


def _read_gt(path: Path):
    with path.open() as fh:
        first = fh.readline().strip()
    if first == GT_HEADER:
        return GroundTruthMap.read(path)
    return cloudio.read_labeled(path)


def _coord_map(cloud: LabeledCloud) -> dict:
    # both sides come from 6-decimal text, so parsed floats compare exactly
    return {tuple(p): int(lbl) for p, lbl in zip(cloud.points.tolist(), cloud.labels.tolist())}


def _frame_counts(pred: LabeledCloud, gt) -> dict:
    if isinstance(gt, GroundTruthMap):
        return confusion(pred.labels, gt.labels_for(pred.points))
    return confusion(_coord_map(pred), _coord_map(gt))


def _pair_frames(pred_dir: Path, gt_path: Path) -> list[tuple[str, Path, Path]]:
    preds = _label_files(pred_dir)
    if gt_path.is_file():
        return [(key, p, gt_path) for key, p in preds.items()]
    gts = _label_files(gt_path)
    pairs = [(key, preds[key], gts[key]) for key in preds if key in gts]
    if not pairs:
        raise UsageError(f"no frame names shared by {pred_dir} and {gt_path}")
    return pairs


def _evaluate_frames(pairs) -> list[dict]:
    counts, gt_cache = [], {}
    for _, pred_path, gt_path in pairs:
        if gt_path not in gt_cache:
            gt_cache[gt_path] = _read_gt(gt_path)
        counts.append(_frame_counts(cloudio.read_labeled(pred_path), gt_cache[gt_path]))
    return counts


def _averaged(counts_list: list[dict], average: str) -> dict:
    if average == "macro":
        return macro_over_frames([per_class(c) for c in counts_list])
    return per_class(pool(counts_list))


def _fmt(v: float, spec: str = ".3f") -> str:
    return "-" if math.isnan(v) else format(v, spec)


def report_table(report: Report, title: str = "") -> str:
    """Aligned text table: per-class metrics for both algorithms, means and improvement."""
    head = f"{'class':16s}" + "".join(f"{'base ' + n[:4]:>11s}" for n in METRIC_NAMES) \
        + "".join(f"{'ours ' + n[:4]:>11s}" for n in METRIC_NAMES)
    lines = [title] if title else []
    lines += [head, "-" * len(head)]
    for k in report.ours:
        b, o = report.base[k].as_tuple(), report.ours[k].as_tuple()
        lines.append(f"{k.name.lower():16s}" + "".join(f"{_fmt(v):>11s}" for v in b + o))
    b = tuple(report.mean_base[n] for n in METRIC_NAMES)
    o = tuple(report.mean_ours[n] for n in METRIC_NAMES)
    lines.append(f"{'mean':16s}" + "".join(f"{_fmt(v):>11s}" for v in b + o))
    imp = report.improvement_display()
    lines.append(f"{'improvement':16s}" + " " * 44
                 + "".join(f"{imp[n]:>11s}" for n in METRIC_NAMES))
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    pairs = _pair_frames(_require(args.pred), _require(args.gt))
    ours_counts = _evaluate_frames(pairs)
    if args.baseline:
        base_counts = _evaluate_frames(_pair_frames(_require(args.baseline), Path(args.gt)))
    else:
        base_counts = None
    for average in ("micro", "macro"):
        ours = _averaged(ours_counts, average)
        base = _averaged(base_counts, average) if base_counts else ours
        report = summarize(ours, base)
        marker = " (written)" if average == args.average else ""
        print(report_table(report, f"{average} average over {len(pairs)} frame(s){marker}"))
        print()
        if average == args.average:
            chosen = report
    rows = list(chosen.rows("ours"))
    if not base_counts:
        rows[-1] = ("improvement_pct",) + (math.nan,) * 4
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cloudio.write_metrics_csv(out, rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def _preset_from_args(args, scenario=None, solar=None, seed=None) -> ScenePreset:
    return ScenePreset(
        scenario=scenario or args.preset,
        solar=solar or args.solar,
        slope_pct=args.slope,
        rng_seed=args.seed if seed is None else seed,
        static=getattr(args, "static", False),
        max_range=args.max_range,
    )


def write_frame(out: Path, frame) -> tuple[Path, Path, Path]:
    """Sensor-frame PLY, base-frame truth labels and the mount transform of one frame."""
    key = f"frame_{frame.frame_index:04d}"
    ply, truth, tf = out / f"{key}.ply", out / f"{key}.truth.txt", out / f"{key}.tf.cfg"
    cloudio.write_ply(ply, frame.cloud)
    tf.write_text(dump_transform(frame.tf))
    # reread the written cloud so the truth coordinates match what a segmenter sees
    written = cloudio.read_cloud(ply)
    base = transform_to_base(written, load_transform(tf))
    cloudio.write_labeled(truth, LabeledCloud(base.points, frame.true_labels,
                                              base.frame_id, frame.cloud.stamp))
    return ply, truth, tf


def cmd_simulate(args) -> int:
    preset = _preset_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for frame in generate_sequence(preset, args.frames):
        write_frame(out, frame)
        print(f"frame_{frame.frame_index:04d}: {len(frame)} points, "
              f"{len(frame.artifact_index)} artifact points")
    return EXIT_OK


# --------------------------------------------------------------------------
# bench


@dataclass(frozen=True)
class FrameRun:
    scenario: str
    solar: str
    seed: int
    frame: int
    n_points: int
    base_counts: dict
    ours_counts: dict
    base_ms: float
    ours_ms: float


def run_bench_frame(job) -> FrameRun:
    preset, frame_index, params = job
    fr = generate_frame(preset, frame_index)
    t0 = time.perf_counter()
    base = baseline_segment(fr.cloud, fr.tf, params)
    t1 = time.perf_counter()
    ours = greenseg_segment(fr.cloud, fr.tf, params)
    t2 = time.perf_counter()
    truth = fr.true_labels[ours.valid_index]
    return FrameRun(preset.scenario, preset.solar, preset.rng_seed, frame_index,
                    len(ours.valid_index), confusion(base.labeled.labels, truth),
                    confusion(ours.labeled.labels, truth), (t1 - t0) * 1e3, (t2 - t1) * 1e3)


def _write_cell_csv(path: Path, report: Report) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "class", *METRIC_NAMES])
        for algo in ("baseline", "greenseg"):
            for name, *vals in report.rows("base" if algo == "baseline" else "ours"):
                if name == "improvement_pct":
                    continue
                w.writerow([algo, name, *("" if math.isnan(v) else f"{v:.6f}" for v in vals)])
        w.writerow(["improvement_pct", "mean",
                    *("" if math.isnan(report.improvement[n]) else f"{report.improvement[n]:.6f}"
                      for n in METRIC_NAMES)])


def cmd_bench(args) -> int:
    from . import plotting

    params = _params(args.params)
    scenarios = SCENARIOS if args.preset == "all" else (args.preset,)
    solar = SOLAR if args.solar == "all" else (args.solar,)
    jobs = [(_preset_from_args(args, sc, so, seed), k, params)
            for sc in scenarios for so in solar
            for seed in range(args.seed, args.seed + args.seeds) for k in range(args.frames)]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            runs = list(ex.map(run_bench_frame, jobs))
    else:
        runs = [run_bench_frame(j) for j in jobs]

    out = Path(args.out)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    (out / "figures").mkdir(parents=True, exist_ok=True)
    summary, iou_pairs = [], {}
    for sc in scenarios:
        for so in solar:
            cell = [r for r in runs if r.scenario == sc and r.solar == so]
            report = summarize(_averaged([r.ours_counts for r in cell], args.average),
                               _averaged([r.base_counts for r in cell], args.average))
            name = f"{sc}_{so}"
            print(report_table(report, f"== {sc} / {so}: {len(cell)} frame(s), "
                                       f"{sum(r.n_points for r in cell)} points =="))
            print()
            (out / "tables" / f"{name}.txt").write_text(report_table(report) + "\n")
            _write_cell_csv(out / "tables" / f"{name}.csv", report)
            plotting.per_class_iou(
                {"baseline": {k.name.lower(): m.iou for k, m in report.base.items()},
                 "greenseg": {k.name.lower(): m.iou for k, m in report.ours.items()}},
                out / "figures" / f"iou_{name}.png", f"{sc} / {so}")
            iou_pairs[(sc, so)] = (report.mean_base["iou"], report.mean_ours["iou"])
            summary.append((sc, so, len(cell), sum(r.n_points for r in cell),
                            report.mean_base["iou"], report.mean_ours["iou"],
                            report.improvement["iou"],
                            float(np.mean([r.base_ms for r in cell])),
                            float(np.mean([r.ours_ms for r in cell]))))

    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "solar", "frames", "points", "mean_iou_baseline",
                    "mean_iou_greenseg", "improvement_iou_pct", "ms_per_frame_baseline",
                    "ms_per_frame_greenseg"])
        for row in summary:
            w.writerow([*row[:4], *(f"{v:.6f}" for v in row[4:])])
    with (out / "timing.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "solar", "seed", "frame", "points", "baseline_ms", "greenseg_ms"])
        for r in runs:
            w.writerow([r.scenario, r.solar, r.seed, r.frame, r.n_points,
                        f"{r.base_ms:.3f}", f"{r.ours_ms:.3f}"])
    plotting.mean_iou_grid(iou_pairs, out / "figures" / "mean_iou.png", scenarios, solar)
    plotting.frame_times([r.ours_ms for r in runs], [r.n_points for r in runs],
                         out / "figures" / "frame_times.png")

    total_s = sum(r.ours_ms for r in runs) / 1e3
    pts = sum(r.n_points for r in runs)
    print(f"greenseg: {len(runs)} frames, {total_s / len(runs) * 1e3:.1f} ms/frame, "
          f"{pts / total_s:,.0f} points/s, {len(runs) / total_s:.1f} frames/s")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="greenseg", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("segment", help="label one cloud or a directory of clouds")
    sp.add_argument("--algo", choices=sorted(SEGMENTERS), default="greenseg")
    sp.add_argument("--cloud", required=True, help=".ply/.xyz file or directory")
    sp.add_argument("--tf", help="sensor-to-base transform file (default identity)")
    sp.add_argument("--params", help="parameter file (default built-in values)")
    sp.add_argument("--out", required=True, help="labeled output file, or directory for many clouds")
    sp.set_defaults(func=cmd_segment)

    ep = sub.add_parser("evaluate", help="score labeled clouds against ground truth")
    ep.add_argument("--pred", required=True, help="labeled file or directory")
    ep.add_argument("--gt", required=True, help="labeled truth file/directory or voxel GT file")
    ep.add_argument("--baseline", help="baseline labeled file or directory")
    ep.add_argument("--average", choices=("micro", "macro"), default="micro")
    ep.add_argument("--out", required=True, help="metrics CSV")
    ep.set_defaults(func=cmd_evaluate)

    def scene_args(p, scenarios, solar):
        p.add_argument("--preset", choices=scenarios, default=scenarios[0])
        p.add_argument("--solar", choices=solar, default=solar[0])
        p.add_argument("--slope", type=float, default=1.0, help="floor slope in percent")
        p.add_argument("--max-range", type=float, default=3.15, help="sensor range in meters")
        p.add_argument("--seed", type=int, default=0)

    mp = sub.add_parser("simulate", help="write synthetic frames with truth labels")
    scene_args(mp, SCENARIOS, SOLAR)
    mp.add_argument("--frames", type=int, default=1)
    mp.add_argument("--static", action="store_true", help="hold the robot pose fixed")
    mp.add_argument("--out", required=True, help="output directory")
    mp.set_defaults(func=cmd_simulate)

    bp = sub.add_parser("bench", help="baseline vs greenseg over synthetic presets")
    scene_args(bp, ("all", *SCENARIOS), ("all", *SOLAR))
    bp.add_argument("--seeds", type=int, default=3, help="scenes per preset, from --seed on")
    bp.add_argument("--frames", type=int, default=1, help="frames per scene")
    bp.add_argument("--params", help="parameter file")
    bp.add_argument("--average", choices=("micro", "macro"), default="micro")
    bp.add_argument("--workers", type=int, default=1)
    bp.add_argument("--out", required=True, help="output directory")
    bp.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "frames", 1) < 1 or getattr(args, "seeds", 1) < 1:
        print("error: --frames and --seeds must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (GreenSegError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
