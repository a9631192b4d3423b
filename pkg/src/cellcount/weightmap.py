"""Per-pixel loss weights emphasizing borders between nearby cells.

Each object in a target mask contributes a field exp(-d^2 / (2 sigma^2)),
where d is the exact Euclidean distance to the object's own border pixels.
The per-object fields are summed pixel-wise, so regions between clumping
cells accumulate weight from every nearby cell, and a class base weight
(cells 1.0, background 1.5 by default) is added on top.

Contributions below exp(-18), i.e. beyond 6 sigma from a border, are cut
to zero; the error is at most 1.5e-8 per object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import LabelMap, STRUCT_4, as_mask, as_probability_map, connected_components

CUTOFF_SIGMAS = 6.0


@dataclass(frozen=True)
class WeightConfig:
    sigma: float = 25.0  # average cell radius, in pixels
    foreground_base: float = 1.0
    background_base: float = 1.5
    include_foreground_proximity: bool = True

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.foreground_base <= 0 or self.background_base <= 0:
            raise ValueError("class base weights must be > 0")


def object_border(lm: LabelMap, label: int) -> np.ndarray:
    """Mask of the object's pixels that touch anything outside it.

    A border pixel has at least one 4-neighbor that is not part of the
    object; pixels on the image edge count their out-of-bounds neighbors
    as outside.
    """
    if label < 1 or label > lm.count:
        raise ValueError(f"label {label} not present (map has {lm.count} objects)")
    obj = lm.labels == label
    interior = ndimage.binary_erosion(obj, structure=STRUCT_4, border_value=0)
    return (obj & ~interior).astype(np.uint8)


def _gaussian_of_distance(border: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-d^2 / (2 sigma^2)) with d = exact EDT to the border pixels."""
    d = ndimage.distance_transform_edt(border == 0)
    field = np.exp(-(d * d) / (2.0 * sigma * sigma))
    field[d > CUTOFF_SIGMAS * sigma] = 0.0
    return field


def object_weight_field(border, sigma: float) -> np.ndarray:
    """Decreasing exponential of the distance to an object border.

    Computed for every pixel of the image; raises on an empty border.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    border = as_mask(border)
    if not border.any():
        raise ValueError("border mask is empty (degenerate object)")
    return _gaussian_of_distance(border, sigma)


def build_weight_map(target, cfg: WeightConfig = WeightConfig()) -> np.ndarray:
    """Weighted map for a target mask: class base + summed object proximity.

    Objects are the 8-connected components of the mask.  Each object's
    border-distance field is accumulated additively; the class base weight
    (foreground on object pixels, background elsewhere) is added last.
    With ``include_foreground_proximity`` off, object pixels keep only
    their base weight.
    """
    target = as_mask(target)
    lm = connected_components(target, connectivity=8)
    acc = np.zeros(target.shape, dtype=np.float64)
    margin = int(math.ceil(CUTOFF_SIGMAS * cfg.sigma))
    h, w = target.shape
    for lab in range(1, lm.count + 1):
        border = object_border(lm, lab)
        ys, xs = np.nonzero(border)
        # Contributions vanish beyond the cutoff, so a window around the
        # object's bounding box sees every non-zero value exactly.
        y0 = max(int(ys.min()) - margin, 0)
        y1 = min(int(ys.max()) + margin + 1, h)
        x0 = max(int(xs.min()) - margin, 0)
        x1 = min(int(xs.max()) + margin + 1, w)
        acc[y0:y1, x0:x1] += _gaussian_of_distance(border[y0:y1, x0:x1], cfg.sigma)
    if not cfg.include_foreground_proximity:
        acc[target == 1] = 0.0
    base = np.where(target == 1, cfg.foreground_base, cfg.background_base)
    return base + acc


def weighted_bce(target, prediction, weights, epsilon: float = 1e-7) -> float:
    """Mean weighted binary cross-entropy between a mask and a heatmap.

    Predictions are clamped into [epsilon, 1 - epsilon] before the logs.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    target = as_mask(target)
    prediction = as_probability_map(prediction)
    weights = np.asarray(weights, dtype=np.float64)
    if not (target.shape == prediction.shape == weights.shape):
        raise ValueError(
            f"shape mismatch: target {target.shape}, prediction {prediction.shape}, "
            f"weights {weights.shape}"
        )
    p = np.clip(prediction, epsilon, 1.0 - epsilon)
    y = target.astype(np.float64)
    per_pixel = -weights * (y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(per_pixel.mean())
