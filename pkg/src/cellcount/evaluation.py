"""Detection and counting metrics.

Target objects are compared with predicted objects by centroid distance:
candidate pairs closer than a fixed gate (50 px by default, the average
cell diameter) are accepted greedily in ascending-distance order, so each
target and each prediction is matched at most once.  Matched predictions
are true positives, the rest false positives; unmatched targets are false
negatives.  Counting quality is summarized by the mean and median absolute
difference between predicted and true counts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .raster import LabelMap, as_mask, connected_components, object_stats

DEFAULT_MATCH_DIST = 50.0

TP_COLOR = (0, 200, 0)
FP_COLOR = (220, 0, 0)
FN_COLOR = (0, 80, 255)


@dataclass(frozen=True)
class MatchOutcome:
    """A partial matching between target and predicted centroids.

    Indices are 0-based positions in the input sequences; every pair's
    distance is strictly below the gate used to produce it.
    """

    pairs: list[tuple[int, int, float]]  # (target_index, pred_index, distance)
    false_positives: list[int]  # unmatched prediction indices
    false_negatives: list[int]  # unmatched target indices


@dataclass(frozen=True)
class ImageMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    iou: float
    predicted_count: int
    target_count: int
    abs_count_error: int


@dataclass(frozen=True)
class DatasetMetrics:
    f1_micro: float
    f1_macro: float
    mean_iou: float
    mae: float
    medae: float
    per_image: list[ImageMetrics]


def match_objects(targets, preds, max_dist: float = DEFAULT_MATCH_DIST) -> MatchOutcome:
    """Uniquely associate predictions with their closest targets.

    Pairs with centroid distance strictly below max_dist are sorted by
    (distance, target index, pred index) and accepted greedily, skipping
    any pair whose target or prediction is already taken.
    """
    if max_dist <= 0:
        raise ValueError(f"max_dist must be > 0, got {max_dist}")
    candidates = []
    for ti, (tx, ty) in enumerate(targets):
        for pi, (px, py) in enumerate(preds):
            d = math.hypot(tx - px, ty - py)
            if d < max_dist:
                candidates.append((d, ti, pi))
    candidates.sort()
    matched_t = set()
    matched_p = set()
    pairs = []
    for d, ti, pi in candidates:
        if ti in matched_t or pi in matched_p:
            continue
        matched_t.add(ti)
        matched_p.add(pi)
        pairs.append((ti, pi, d))
    fps = [pi for pi in range(len(preds)) if pi not in matched_p]
    fns = [ti for ti in range(len(targets)) if ti not in matched_t]
    return MatchOutcome(pairs=pairs, false_positives=fps, false_negatives=fns)


def _safe_ratio(num: int, den: int, empty_value: float) -> float:
    return num / den if den > 0 else empty_value


def _counts_to_metrics(tp: int, fp: int, fn: int, iou: float) -> ImageMetrics:
    precision = _safe_ratio(tp, tp + fp, 1.0 if fn == 0 else 0.0)
    recall = _safe_ratio(tp, tp + fn, 1.0 if fp == 0 else 0.0)
    f1 = _safe_ratio(2 * tp, 2 * tp + fp + fn, 1.0)
    return ImageMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        iou=iou,
        predicted_count=tp + fp,
        target_count=tp + fn,
        abs_count_error=abs((tp + fp) - (tp + fn)),
    )


def foreground_iou(pred_fg: np.ndarray, target_fg: np.ndarray) -> float:
    """Foreground intersection over union; two empty masks count as 1.0."""
    inter = int(np.logical_and(pred_fg, target_fg).sum())
    union = int(np.logical_or(pred_fg, target_fg).sum())
    return inter / union if union > 0 else 1.0


def image_metrics(pred: LabelMap, target, max_dist: float = DEFAULT_MATCH_DIST) -> ImageMetrics:
    """Match one predicted LabelMap against a ground-truth mask."""
    target = as_mask(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    target_lm = connected_components(target, connectivity=8)
    t_centroids = [s.centroid for s in object_stats(target_lm)]
    p_centroids = [s.centroid for s in object_stats(pred)]
    outcome = match_objects(t_centroids, p_centroids, max_dist)
    tp = len(outcome.pairs)
    fp = len(outcome.false_positives)
    fn = len(outcome.false_negatives)
    iou = foreground_iou(pred.labels > 0, target == 1)
    return _counts_to_metrics(tp, fp, fn, iou)


def dataset_metrics(images, max_dist: float = DEFAULT_MATCH_DIST) -> DatasetMetrics:
    """Aggregate (pred LabelMap, target mask) pairs over a dataset.

    F1 is micro-averaged from summed tp/fp/fn; the macro mean of per-image
    F1 is reported alongside for transparency.
    """
    per_image = [image_metrics(pred, target, max_dist) for pred, target in images]
    return aggregate_metrics(per_image)


def aggregate_metrics(per_image: list[ImageMetrics]) -> DatasetMetrics:
    if not per_image:
        raise ValueError("dataset is empty")
    tp = sum(m.tp for m in per_image)
    fp = sum(m.fp for m in per_image)
    fn = sum(m.fn for m in per_image)
    f1_micro = _safe_ratio(2 * tp, 2 * tp + fp + fn, 1.0)
    f1_macro = float(np.mean([m.f1 for m in per_image]))
    errors = np.array([m.abs_count_error for m in per_image], dtype=np.float64)
    return DatasetMetrics(
        f1_micro=f1_micro,
        f1_macro=f1_macro,
        mean_iou=float(np.mean([m.iou for m in per_image])),
        mae=float(errors.mean()),
        medae=float(np.median(errors)),
        per_image=per_image,
    )


CSV_FIELDS = [
    "file", "tp", "fp", "fn", "precision", "recall", "f1", "iou",
    "pred_count", "target_count", "abs_err",
]


def write_report_csv(fh, names: list[str], dm: DatasetMetrics) -> None:
    """One row per image, in the given order."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for name, m in zip(names, dm.per_image):
        writer.writerow([
            name, m.tp, m.fp, m.fn,
            f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}", f"{m.iou:.6f}",
            m.predicted_count, m.target_count, m.abs_count_error,
        ])


def report_json_dict(names: list[str], dm: DatasetMetrics) -> dict:
    return {
        "summary": {
            "f1_micro": dm.f1_micro,
            "f1_macro": dm.f1_macro,
            "mean_iou": dm.mean_iou,
            "mae": dm.mae,
            "medae": dm.medae,
            "images": len(dm.per_image),
        },
        "per_image": [
            {"file": name, **asdict(m)} for name, m in zip(names, dm.per_image)
        ],
    }


def write_report_json(fh, names: list[str], dm: DatasetMetrics) -> None:
    json.dump(report_json_dict(names, dm), fh, indent=2, sort_keys=True)
    fh.write("\n")


def draw_box(img: np.ndarray, bbox, color, pad: int = 2) -> None:
    h, w = img.shape[:2]
    x0 = max(bbox[0] - pad, 0)
    y0 = max(bbox[1] - pad, 0)
    x1 = min(bbox[2] + pad, w - 1)
    y1 = min(bbox[3] + pad, h - 1)
    img[y0, x0:x1 + 1] = color
    img[y1, x0:x1 + 1] = color
    img[y0:y1 + 1, x0] = color
    img[y0:y1 + 1, x1] = color


def render_match_overlay(pred: LabelMap, target, max_dist: float = DEFAULT_MATCH_DIST,
                         base: np.ndarray | None = None) -> np.ndarray:
    """RGB visualization of the matching outcome.

    Green boxes mark matched predictions (true positives), red boxes
    unmatched predictions (false positives), blue boxes unmatched targets
    (false negatives).  ``base`` is an optional grayscale backdrop in
    [0, 1]; by default the target mask is shown dimmed.
    """
    target = as_mask(target)
    if base is None:
        base = target * 0.35
    backdrop = np.clip(np.asarray(base, dtype=np.float64), 0.0, 1.0)
    img = np.repeat((backdrop * 255).astype(np.uint8)[:, :, None], 3, axis=2)
    target_lm = connected_components(target, connectivity=8)
    t_stats = object_stats(target_lm)
    p_stats = object_stats(pred)
    outcome = match_objects([s.centroid for s in t_stats],
                            [s.centroid for s in p_stats], max_dist)
    for _, pi, _ in outcome.pairs:
        draw_box(img, p_stats[pi].bbox, TP_COLOR)
    for pi in outcome.false_positives:
        draw_box(img, p_stats[pi].bbox, FP_COLOR)
    for ti in outcome.false_negatives:
        draw_box(img, t_stats[ti].bbox, FN_COLOR)
    return img
