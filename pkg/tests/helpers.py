"""Shared geometric fixtures for the test suite."""

import numpy as np


def disc(h, w, cy, cx, r):
    """Binary disc: pixels with center distance <= r."""
    ys, xs = np.mgrid[0:h, 0:w]
    return ((ys - cy) ** 2 + (xs - cx) ** 2 <= r * r).astype(np.uint8)


def annulus(h, w, cy, cx, r_outer, r_inner):
    ring = disc(h, w, cy, cx, r_outer) & ~disc(h, w, cy, cx, r_inner)
    return ring.astype(np.uint8)


def random_mask(rng, h, w, density=0.5):
    return (rng.random((h, w)) < density).astype(np.uint8)


def blob_mask(rng, h, w, n_blobs, r_range=(3, 9)):
    """Union of random discs; handy for object-level tests."""
    mask = np.zeros((h, w), dtype=np.uint8)
    for _ in range(n_blobs):
        r = int(rng.integers(r_range[0], r_range[1] + 1))
        cy = int(rng.integers(r, h - r)) if h > 2 * r else h // 2
        cx = int(rng.integers(r, w - r)) if w > 2 * r else w // 2
        mask |= disc(h, w, cy, cx, r)
    return mask
