"""PNG and weight-map raster file I/O.

Supported encodings:

* grayscale PNG, 8-bit or 16-bit,
* 8-bit RGB PNG,
* binary masks as 8-bit grayscale PNG with values {0, 255},
* label maps as 16-bit grayscale PNG (label id = pixel value),
* weight maps in the little-endian "CCWM" binary format: magic ``CCWM``,
  u32 width, u32 height, then width*height float32 values row-major.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image, PngImagePlugin

from .raster import LabelMap, as_mask

CCWM_MAGIC = b"CCWM"


def read_gray(path) -> np.ndarray:
    """Read a grayscale PNG as uint8 or uint16 (RGB input is rejected)."""
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)
        if im.mode in ("I", "I;16"):
            arr = np.asarray(im, dtype=np.int32)
            if arr.min() < 0 or arr.max() > 65535:
                raise ValueError(f"{path}: pixel values outside 16-bit range")
            return arr.astype(np.uint16)
        raise ValueError(f"{path}: expected grayscale PNG, got mode {im.mode!r}")


def write_gray(path, arr) -> None:
    arr = np.asarray(arr)
    if arr.dtype == np.uint8:
        Image.fromarray(arr, mode="L").save(path, format="PNG")
    elif arr.dtype == np.uint16:
        im = Image.new("I;16", (arr.shape[1], arr.shape[0]))
        im.frombytes(arr.astype("<u2").tobytes())
        im.save(path, format="PNG")
    else:
        raise ValueError(f"grayscale PNG needs uint8 or uint16, got {arr.dtype}")


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_rgb(path, arr) -> None:
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"RGB image must have shape (h, w, 3), got {arr.shape}")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_probability(path) -> np.ndarray:
    """Read a grayscale PNG as probabilities: value / (2^bitdepth - 1)."""
    arr = read_gray(path)
    full_scale = 255.0 if arr.dtype == np.uint8 else 65535.0
    return arr.astype(np.float64) / full_scale


def write_probability(path, p, bitdepth: int = 16) -> None:
    """Quantize a probability map to a grayscale PNG of the given bit depth."""
    p = np.asarray(p, dtype=np.float64)
    if bitdepth == 8:
        write_gray(path, np.rint(p * 255.0).astype(np.uint8))
    elif bitdepth == 16:
        write_gray(path, np.rint(p * 65535.0).astype(np.uint16))
    else:
        raise ValueError(f"bitdepth must be 8 or 16, got {bitdepth}")


def read_mask(path) -> np.ndarray:
    """Read a binary mask PNG; values must be exactly {0, 255}."""
    arr = read_gray(path)
    if not np.isin(np.unique(arr), (0, 255)).all():
        raise ValueError(f"{path}: mask PNG must contain only 0 and 255")
    return (arr == 255).astype(np.uint8)


def write_mask(path, mask) -> None:
    mask = as_mask(mask)
    write_gray(path, (mask * 255).astype(np.uint8))


def read_label_map(path) -> LabelMap:
    arr = read_gray(path).astype(np.int32)
    return LabelMap(labels=arr, count=int(arr.max()))


def write_label_map(path, lm: LabelMap) -> None:
    if lm.count > 65535:
        raise ValueError(f"cannot serialize {lm.count} labels into a 16-bit PNG")
    write_gray(path, lm.labels.astype(np.uint16))


def read_weight_map(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CCWM_MAGIC:
        raise ValueError(f"{path}: not a CCWM weight map (bad magic)")
    if len(data) < 12:
        raise ValueError(f"{path}: truncated CCWM header")
    width, height = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * width * height
    if len(data) != expected:
        raise ValueError(f"{path}: CCWM payload is {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=12)
    return values.reshape(height, width).astype(np.float64)


def write_weight_map(path, weights) -> None:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2:
        raise ValueError(f"weight map must be 2-D, got shape {weights.shape}")
    height, width = weights.shape
    with open(path, "wb") as fh:
        fh.write(CCWM_MAGIC)
        fh.write(struct.pack("<II", width, height))
        fh.write(weights.astype("<f4").tobytes())


def write_weight_map_png(path, weights) -> float:
    """16-bit visualization of a weight map.

    Values are multiplied by a scale factor chosen so the maximum maps to
    65535; the factor is recorded in the PNG ``ccwm_scale`` text chunk and
    returned.
    """
    weights = np.asarray(weights, dtype=np.float64)
    peak = float(weights.max())
    scale = 65535.0 / peak if peak > 0 else 1.0
    arr = np.rint(weights * scale).astype(np.uint16)
    im = Image.new("I;16", (arr.shape[1], arr.shape[0]))
    im.frombytes(arr.astype("<u2").tobytes())
    info = PngImagePlugin.PngInfo()
    info.add_text("ccwm_scale", repr(scale))
    im.save(path, format="PNG", pnginfo=info)
    return scale
