"""Deterministic synthetic microscopy scenes with known ground truth.

Scenes are rendered as bright elliptical cells with radial intensity
falloff over a dark noisy background, mimicking fluorescence imagery where
stained cells appear as yellow spots.  Optional distractor blobs share the
cell shape model at lower intensity, standing in for artifacts and
non-marked structures.  Everything is a pure function of (config, seed),
so generated scenes double as counting oracles for pipeline tests.

The augmentation suite covers quarter-turn rotations, Gaussian noise,
brightness scaling and elastic deformation, plus the overlapping crop grid
used to split full-size images into training patches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from . import pngio
from .raster import as_mask

PLACEMENT_ATTEMPTS = 500


@dataclass(frozen=True)
class Blob:
    """One elliptical object: center, semi-axes, rotation, peak intensity."""

    cx: float
    cy: float
    axis_a: float
    axis_b: float
    angle: float  # radians
    intensity: float

    @property
    def reach(self) -> float:
        return max(self.axis_a, self.axis_b)


@dataclass(frozen=True)
class SceneConfig:
    width: int = 512
    height: int = 512
    cell_count: int = 10
    axis_range: tuple[float, float] = (15.0, 35.0)  # avg radius 25
    intensity_range: tuple[float, float] = (0.75, 1.0)
    distractor_count: int = 0
    distractor_intensity: tuple[float, float] = (0.25, 0.45)
    background: float = 0.05
    noise_sigma: float = 0.02
    clump_prob: float = 0.0
    min_center_dist: float = 50.0  # enforced when clumping
    rgb: bool = False

    def __post_init__(self):
        if self.cell_count < 0:
            raise ValueError(f"cell_count must be >= 0, got {self.cell_count}")
        if not 0.0 <= self.clump_prob <= 1.0:
            raise ValueError(f"clump_prob must be in [0, 1], got {self.clump_prob}")
        if self.axis_range[0] < 1 or self.axis_range[1] < self.axis_range[0]:
            raise ValueError(f"bad axis_range {self.axis_range}")
        needed = 2.0 * (self.axis_range[1] + 2.0)
        if (self.cell_count > 0 or self.distractor_count > 0) and \
                min(self.width, self.height) <= needed:
            raise ValueError(
                f"{self.width}x{self.height} scene cannot hold objects with "
                f"semi-axes up to {self.axis_range[1]} (needs > {needed:.0f} px)"
            )


@dataclass(frozen=True)
class SynthScene:
    width: int
    height: int
    cells: tuple[Blob, ...]
    distractors: tuple[Blob, ...]
    background: float
    noise_sigma: float
    seed: int


def _far_enough(blob: Blob, others, min_dist: float, disjoint: bool) -> bool:
    for other in others:
        d = math.hypot(blob.cx - other.cx, blob.cy - other.cy)
        if d < min_dist:
            return False
        if disjoint and d < blob.reach + other.reach + 3.0:
            return False
    return True


def _sample_blob(rng, cfg: SceneConfig, intensity_range) -> Blob:
    a = rng.uniform(*cfg.axis_range)
    b = rng.uniform(*cfg.axis_range)
    reach = max(a, b)
    margin = reach + 2.0
    return Blob(
        cx=rng.uniform(margin, cfg.width - margin),
        cy=rng.uniform(margin, cfg.height - margin),
        axis_a=a,
        axis_b=b,
        angle=rng.uniform(0.0, math.pi),
        intensity=rng.uniform(*intensity_range),
    )


def sample_scene(cfg: SceneConfig, seed: int) -> SynthScene:
    """Draw scene geometry.  Raises if placement keeps failing.

    With clumping disabled, cells are pairwise disjoint.  With clumping,
    only the configured minimum center distance is enforced and a fraction
    of the cells is deliberately pulled next to an existing one, producing
    touching or overlapping objects.
    """
    rng = np.random.default_rng(seed)
    clumping = cfg.clump_prob > 0.0
    cells: list[Blob] = []
    for _ in range(cfg.cell_count):
        placed = False
        for _ in range(PLACEMENT_ATTEMPTS):
            blob = _sample_blob(rng, cfg, cfg.intensity_range)
            if clumping and cells and rng.random() < cfg.clump_prob:
                anchor = cells[rng.integers(len(cells))]
                dist = rng.uniform(cfg.min_center_dist, cfg.min_center_dist * 1.3)
                theta = rng.uniform(0.0, 2.0 * math.pi)
                margin = blob.reach + 2.0
                cx = min(max(anchor.cx + dist * math.cos(theta), margin), cfg.width - margin)
                cy = min(max(anchor.cy + dist * math.sin(theta), margin), cfg.height - margin)
                blob = Blob(cx, cy, blob.axis_a, blob.axis_b, blob.angle, blob.intensity)
            min_dist = cfg.min_center_dist if clumping else 0.0
            if _far_enough(blob, cells, min_dist, disjoint=not clumping):
                cells.append(blob)
                placed = True
                break
        if not placed:
            raise ValueError(
                f"could not place {cfg.cell_count} cells in "
                f"{cfg.width}x{cfg.height} after {PLACEMENT_ATTEMPTS} attempts"
            )
    distractors: list[Blob] = []
    for _ in range(cfg.distractor_count):
        placed = False
        for _ in range(PLACEMENT_ATTEMPTS):
            blob = _sample_blob(rng, cfg, cfg.distractor_intensity)
            if _far_enough(blob, cells + distractors, 0.0, disjoint=True):
                distractors.append(blob)
                placed = True
                break
        if not placed:
            raise ValueError("could not place distractors; scene too crowded")
    return SynthScene(
        width=cfg.width,
        height=cfg.height,
        cells=tuple(cells),
        distractors=tuple(distractors),
        background=cfg.background,
        noise_sigma=cfg.noise_sigma,
        seed=seed,
    )


def _blob_window(blob: Blob, h: int, w: int):
    pad = blob.reach + 3.0
    y0 = max(int(blob.cy - pad), 0)
    y1 = min(int(blob.cy + pad) + 2, h)
    x0 = max(int(blob.cx - pad), 0)
    x1 = min(int(blob.cx + pad) + 2, w)
    return y0, y1, x0, x1


def _ellipse_rho(blob: Blob, ys, xs) -> np.ndarray:
    """Normalized elliptical radius: 1.0 on the ellipse contour."""
    dx = xs - blob.cx
    dy = ys - blob.cy
    cos_t = math.cos(blob.angle)
    sin_t = math.sin(blob.angle)
    u = (dx * cos_t + dy * sin_t) / blob.axis_a
    v = (-dx * sin_t + dy * cos_t) / blob.axis_b
    return np.sqrt(u * u + v * v)


def rasterize_blobs(blobs, height: int, width: int) -> np.ndarray:
    """Binary mask of the union of ellipse interiors (rho <= 1)."""
    mask = np.zeros((height, width), dtype=np.uint8)
    for blob in blobs:
        y0, y1, x0, x1 = _blob_window(blob, height, width)
        ys, xs = np.mgrid[y0:y1, x0:x1]
        mask[y0:y1, x0:x1] |= (_ellipse_rho(blob, ys, xs) <= 1.0).astype(np.uint8)
    return mask


def render_scene(scene: SynthScene, rgb: bool = False):
    """Render (image, mask) for a sampled scene.

    The image is float in [0, 1]: background level plus per-blob intensity
    with radial falloff and a ~1.5 px anti-aliased rim, max-composited so
    overlapping cells stay bright.  The mask marks cell interiors only.
    """
    h, w = scene.height, scene.width
    intensity = np.full((h, w), scene.background, dtype=np.float64)
    for blob in scene.cells + scene.distractors:
        y0, y1, x0, x1 = _blob_window(blob, h, w)
        ys, xs = np.mgrid[y0:y1, x0:x1]
        rho = _ellipse_rho(blob, ys, xs)
        rim = 1.5 / min(blob.axis_a, blob.axis_b)
        profile = blob.intensity * (1.0 - 0.45 * np.minimum(rho, 1.0) ** 2)
        coverage = np.clip((1.0 + rim - rho) / rim, 0.0, 1.0)
        patch = intensity[y0:y1, x0:x1]
        np.maximum(patch, profile * coverage, out=patch)
    if scene.noise_sigma > 0:
        noise_rng = np.random.default_rng([scene.seed, 0xACE])
        intensity = intensity + noise_rng.normal(0.0, scene.noise_sigma, (h, w))
    image = np.clip(intensity, 0.0, 1.0)
    if rgb:
        image = np.stack([image, image * 0.95, image * 0.18], axis=2)
    mask = rasterize_blobs(scene.cells, h, w)
    return image, mask


def generate_scene(cfg: SceneConfig, seed: int):
    """Sample and render one scene; returns (image, mask, cell count)."""
    scene = sample_scene(cfg, seed)
    image, mask = render_scene(scene, rgb=cfg.rgb)
    return image, mask, len(scene.cells)


def ideal_heatmap(mask, edge_softness: float = 0.0, noise: float = 0.0,
                  seed: int = 0) -> np.ndarray:
    """Stand-in for a trained model's output on a known mask.

    With zero softness and noise the map is exactly 1.0 on the mask and
    0.0 elsewhere; softness blurs the transition, noise adds clamped
    Gaussian jitter.
    """
    if edge_softness < 0:
        raise ValueError(f"edge_softness must be >= 0, got {edge_softness}")
    mask = as_mask(mask)
    heat = mask.astype(np.float64)
    if edge_softness > 0:
        heat = gaussian_filter(heat, sigma=edge_softness)
    if noise > 0:
        rng = np.random.default_rng([seed, 0xBEA7])
        heat = heat + rng.normal(0.0, noise, heat.shape)
    return np.clip(heat, 0.0, 1.0)


@dataclass(frozen=True)
class AugmentOp:
    """One augmentation: quarter-turn rotation, noise, brightness or elastic."""

    kind: str  # rot90 | gaussian_noise | brightness | elastic
    k: int = 1
    sigma: float = 0.05
    scale: float = 1.0
    alpha: float = 300.0
    sigma_e: float = 10.0
    seed: int = 0

    KINDS = ("rot90", "gaussian_noise", "brightness", "elastic")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown augmentation {self.kind!r}; choose from {self.KINDS}")


def _displace(arr: np.ndarray, dy: np.ndarray, dx: np.ndarray, order: int) -> np.ndarray:
    h, w = arr.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    coords = [ys + dy, xs + dx]
    if arr.ndim == 2:
        return map_coordinates(arr, coords, order=order, mode="reflect")
    channels = [map_coordinates(arr[:, :, c], coords, order=order, mode="reflect")
                for c in range(arr.shape[2])]
    return np.stack(channels, axis=2)


def apply_augment(image, mask, op: AugmentOp):
    """Apply one augmentation to an image/mask pair.

    Geometric operations transform both rasters identically (bilinear for
    the image, nearest for the mask); photometric ones leave the mask
    untouched and clamp the image back into [0, 1].
    """
    image = np.asarray(image, dtype=np.float64)
    mask = as_mask(mask)
    if image.shape[:2] != mask.shape:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape} differ")
    if op.kind == "rot90":
        return np.rot90(image, op.k).copy(), np.rot90(mask, op.k).copy()
    if op.kind == "gaussian_noise":
        rng = np.random.default_rng(op.seed)
        return np.clip(image + rng.normal(0.0, op.sigma, image.shape), 0.0, 1.0), mask
    if op.kind == "brightness":
        return np.clip(image * op.scale, 0.0, 1.0), mask
    # elastic: smoothed random displacement field, same warp for both rasters
    rng = np.random.default_rng(op.seed)
    h, w = mask.shape
    dy = gaussian_filter(rng.uniform(-1.0, 1.0, (h, w)), op.sigma_e) * op.alpha
    dx = gaussian_filter(rng.uniform(-1.0, 1.0, (h, w)), op.sigma_e) * op.alpha
    warped = _displace(image, dy, dx, order=1)
    warped_mask = _displace(mask, dy, dx, order=0).astype(np.uint8)
    return warped, warped_mask


@dataclass(frozen=True)
class Crop:
    x: int
    y: int
    image: np.ndarray
    mask: np.ndarray


def _grid_offsets(size: int, crop: int) -> list[int]:
    n = math.ceil(size / crop)
    if n == 1:
        return [0]
    span = size - crop
    return [round(i * span / (n - 1)) for i in range(n)]


def crop_grid(image, mask, crop: int = 512) -> list[Crop]:
    """Cover the image with evenly overlapping crop x crop tiles.

    A 1600x1200 input yields the twelve 512x512 partially overlapping
    crops of a 4x3 grid; smaller-than-crop inputs are rejected.
    """
    image = np.asarray(image)
    mask = as_mask(mask)
    h, w = mask.shape
    if image.shape[:2] != (h, w):
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape} differ")
    if h < crop or w < crop:
        raise ValueError(f"image {w}x{h} is smaller than the {crop}x{crop} crop")
    crops = []
    for y in _grid_offsets(h, crop):
        for x in _grid_offsets(w, crop):
            crops.append(Crop(x=x, y=y,
                              image=image[y:y + crop, x:x + crop].copy(),
                              mask=mask[y:y + crop, x:x + crop].copy()))
    return crops


MANIFEST_FIELDS = ["seed", "count", "object", "kind", "cx", "cy",
                   "axis_a", "axis_b", "angle", "intensity"]


def write_scene_files(outdir, scene: SynthScene, rgb: bool = False,
                      heatmap_softness: float = 0.0, heatmap_noise: float = 0.0):
    """Write scene_<seed>.png, its mask and its ideal heatmap; returns the rows
    this scene contributes to manifest.csv."""
    outdir = Path(outdir)
    image, mask = render_scene(scene, rgb=rgb)
    stem = f"scene_{scene.seed}"
    if rgb:
        pngio.write_rgb(outdir / f"{stem}.png", np.rint(image * 255).astype(np.uint8))
    else:
        pngio.write_gray(outdir / f"{stem}.png", np.rint(image * 255).astype(np.uint8))
    pngio.write_mask(outdir / f"{stem}_mask.png", mask)
    heat = ideal_heatmap(mask, heatmap_softness, heatmap_noise, seed=scene.seed)
    pngio.write_probability(outdir / f"{stem}_heatmap.png", heat)
    rows = []
    objects = [("cell", blob) for blob in scene.cells]
    objects += [("distractor", blob) for blob in scene.distractors]
    if not objects:
        rows.append([scene.seed, 0, "", "", "", "", "", "", "", ""])
    for idx, (kind, blob) in enumerate(objects):
        rows.append([
            scene.seed, len(scene.cells), idx, kind,
            f"{blob.cx:.3f}", f"{blob.cy:.3f}",
            f"{blob.axis_a:.3f}", f"{blob.axis_b:.3f}",
            f"{blob.angle:.5f}", f"{blob.intensity:.5f}",
        ])
    return rows


def write_manifest(fh, rows) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(MANIFEST_FIELDS)
    writer.writerows(rows)
