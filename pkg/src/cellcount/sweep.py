"""Binarization cutoff optimization by exhaustive F1 sweep.

The detection F1 over a calibration set is a step function of the cutoff,
so the sweep simply evaluates the full post-processing pipeline at every
grid value and keeps the best; ties go to the smallest threshold, which
favors recall on borderline cells.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

from .evaluation import DEFAULT_MATCH_DIST, aggregate_metrics, image_metrics
from .postproc import PostprocConfig, postprocess


@dataclass(frozen=True)
class SweepResult:
    points: list[tuple[float, float]]  # (threshold, f1), threshold ascending
    best_threshold: float
    best_f1: float


DEFAULT_GRID = [round(0.05 * k, 2) for k in range(1, 20)]  # 0.05 .. 0.95


def f1_curve(heatmaps, targets, cfg: PostprocConfig = PostprocConfig(),
             grid=None, max_dist: float = DEFAULT_MATCH_DIST) -> SweepResult:
    """Micro-averaged detection F1 as a function of the cutoff.

    ``heatmaps`` and ``targets`` are paired sequences; ``cfg`` supplies the
    post-processing parameters other than the threshold under test.
    """
    if grid is None:
        grid = DEFAULT_GRID
    grid = [float(t) for t in grid]
    if not grid:
        raise ValueError("threshold grid is empty")
    if any(not 0.0 <= t <= 1.0 for t in grid):
        raise ValueError("grid values must lie in [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid values must be strictly increasing")
    heatmaps = list(heatmaps)
    targets = list(targets)
    if not heatmaps:
        raise ValueError("dataset is empty")
    if len(heatmaps) != len(targets):
        raise ValueError(f"{len(heatmaps)} heatmaps vs {len(targets)} targets")
    points = []
    for t in grid:
        run_cfg = replace(cfg, threshold=t)
        per_image = [
            image_metrics(postprocess(hm, run_cfg), target, max_dist)
            for hm, target in zip(heatmaps, targets)
        ]
        points.append((t, aggregate_metrics(per_image).f1_micro))
    best_threshold, best_f1 = max(points, key=lambda p: (p[1], -p[0]))
    return SweepResult(points=points, best_threshold=best_threshold, best_f1=best_f1)


def write_curve_csv(fh, result: SweepResult) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["threshold", "f1"])
    for t, f1 in result.points:
        writer.writerow([f"{t:.6f}", f"{f1:.6f}"])
    writer.writerow(["best", f"{result.best_threshold:.6f}"])
    writer.writerow(["best_f1", f"{result.best_f1:.6f}"])
