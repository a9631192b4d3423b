"""Low-level raster containers and algorithms shared by the whole pipeline.

Conventions used throughout the package:

* images are 2-D numpy arrays indexed ``[row, col]`` with the origin at the
  top-left; ``x`` = column, ``y`` = row,
* a binary mask is a uint8 array of {0, 1},
* a probability map is a float array with values in [0, 1],
* centroids are continuous (x, y) coordinates at pixel centers.

Foreground connectivity defaults to 8; background operations (hole filling)
use the complementary 4-connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
STRUCT_8 = np.ones((3, 3), dtype=bool)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return STRUCT_4
    if connectivity == 8:
        return STRUCT_8
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def as_mask(arr) -> np.ndarray:
    """Validate and return a binary mask as a uint8 array of {0, 1}."""
    mask = np.asarray(arr)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.size == 0:
        raise ValueError("mask must have at least one pixel")
    if mask.dtype == bool:
        return mask.astype(np.uint8)
    uniq = np.unique(mask)
    if not np.isin(uniq, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return mask.astype(np.uint8, copy=False)


def as_probability_map(arr) -> np.ndarray:
    """Validate and return a probability map as float64 in [0, 1]."""
    p = np.asarray(arr, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"probability map must be 2-D, got shape {p.shape}")
    if p.size == 0:
        raise ValueError("probability map must have at least one pixel")
    if np.isnan(p).any() or p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("probability values must lie in [0, 1]")
    return p


@dataclass(frozen=True)
class LabelMap:
    """Labelled objects: 0 = background, labels 1..count each one connected region."""

    labels: np.ndarray  # int32, same shape as the source mask
    count: int

    @property
    def shape(self):
        return self.labels.shape

    def mask(self) -> np.ndarray:
        """Binary foreground support of all labelled objects."""
        return (self.labels > 0).astype(np.uint8)


@dataclass(frozen=True)
class ObjectStats:
    label: int
    area: int
    centroid: tuple[float, float]  # (x, y)
    bbox: tuple[int, int, int, int]  # (x_min, y_min, x_max, y_max), inclusive


def connected_components(mask, connectivity: int = 8) -> LabelMap:
    """Label maximal connected foreground regions.

    Labels are assigned in deterministic row-major first-encounter order:
    the component whose first pixel comes earliest in the scan gets label 1.
    """
    mask = as_mask(mask)
    raw, n = ndimage.label(mask, structure=_structure(connectivity))
    if n == 0:
        return LabelMap(labels=raw.astype(np.int32), count=0)
    # ndimage.label order is an implementation detail; renumber explicitly.
    flat = raw.ravel()
    uniq, first = np.unique(flat, return_index=True)
    fg = uniq != 0
    order = np.argsort(first[fg], kind="stable")
    perm = np.zeros(n + 1, dtype=np.int32)
    perm[uniq[fg][order]] = np.arange(1, n + 1, dtype=np.int32)
    return LabelMap(labels=perm[raw], count=int(n))


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest zero pixel.

    Distances are center-to-center in pixel units and 0 on background.  A
    mask with no background pixel at all is degenerate: the result is +inf
    everywhere (see ``is_degenerate_distance_field``).
    """
    mask = as_mask(mask)
    if mask.all():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(mask)


def is_degenerate_distance_field(field: np.ndarray) -> bool:
    """True for the all-foreground sentinel returned by ``distance_transform``."""
    return bool(np.isinf(field).all())


def object_stats(lm: LabelMap) -> list[ObjectStats]:
    """Per-object area, centroid and inclusive bounding box, sorted by label."""
    labels = lm.labels
    if lm.count == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=lm.count + 1)
    ys, xs = np.nonzero(labels)
    vals = labels[ys, xs]
    sum_x = np.bincount(vals, weights=xs, minlength=lm.count + 1)
    sum_y = np.bincount(vals, weights=ys, minlength=lm.count + 1)
    slices = ndimage.find_objects(labels, max_label=lm.count)
    stats = []
    for lab in range(1, lm.count + 1):
        sl = slices[lab - 1]
        if sl is None:
            raise ValueError(f"label {lab} missing from LabelMap")
        area = int(areas[lab])
        cx = float(sum_x[lab] / area)
        cy = float(sum_y[lab] / area)
        bbox = (int(sl[1].start), int(sl[0].start),
                int(sl[1].stop - 1), int(sl[0].stop - 1))
        stats.append(ObjectStats(label=lab, area=area, centroid=(cx, cy), bbox=bbox))
    return stats


def fill_holes(mask) -> np.ndarray:
    """Fill background regions not 4-connected to the image border."""
    mask = as_mask(mask)
    return ndimage.binary_fill_holes(mask, structure=STRUCT_4).astype(np.uint8)


def remove_small(mask, min_area: int, connectivity: int = 8) -> np.ndarray:
    """Drop components with area < min_area; survivors are kept bit-exactly."""
    if min_area < 0:
        raise ValueError(f"min_area must be >= 0, got {min_area}")
    mask = as_mask(mask)
    if min_area <= 1:
        return mask.copy()
    lm = connected_components(mask, connectivity)
    if lm.count == 0:
        return mask.copy()
    areas = np.bincount(lm.labels.ravel(), minlength=lm.count + 1)
    keep = areas >= min_area
    keep[0] = False
    return keep[lm.labels].astype(np.uint8)


def threshold(p, t: float) -> np.ndarray:
    """Binarize a probability map: foreground where value > t (strict)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {t}")
    p = as_probability_map(p)
    return (p > t).astype(np.uint8)
