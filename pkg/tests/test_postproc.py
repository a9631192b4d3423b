import numpy as np
import pytest

from cellcount.postproc import PostprocConfig, clean, postprocess, watershed_split
from cellcount.raster import connected_components
from cellcount.synth import SceneConfig, generate_scene, ideal_heatmap
from helpers import annulus, disc


class TestClean:
    def test_specks_removed(self):
        mask = disc(100, 100, 50, 50, 20)
        mask[5, 5:8] = 1  # 3-pixel speck
        out = clean(mask, 30)
        assert np.array_equal(out, disc(100, 100, 50, 50, 20))

    def test_annulus_filled(self):
        ring = annulus(80, 80, 40, 40, 20, 10)
        assert ring.sum() >= 30
        assert np.array_equal(clean(ring, 30), disc(80, 80, 40, 40, 20))

    def test_empty_stays_empty(self):
        empty = np.zeros((10, 10), dtype=np.uint8)
        assert np.array_equal(clean(empty, 30), empty)

    def test_remove_runs_before_fill(self):
        # a small ring below min_area must vanish entirely, not get filled
        # first (which would push it above the cutoff)
        ring = annulus(30, 30, 15, 15, 4, 3)
        assert 0 < ring.sum() < 30
        filled_area = disc(30, 30, 15, 15, 4).sum()
        assert filled_area >= 30
        assert not clean(ring, 30).any()


class TestWatershedSplit:
    def test_single_disc_one_object(self):
        mask = disc(120, 120, 60, 60, 25)
        lm = watershed_split(mask, 25)
        assert lm.count == 1
        assert np.array_equal(lm.mask(), mask)

    def test_two_discs_60px_apart(self):
        mask = (disc(120, 200, 60, 60, 25) | disc(120, 200, 60, 120, 25)).astype(np.uint8)
        lm = watershed_split(mask, 25)
        assert lm.count == 2
        assert np.array_equal(lm.mask(), mask)
        # the two label supports partition the union
        a = lm.labels == 1
        b = lm.labels == 2
        assert not (a & b).any()
        assert np.array_equal((a | b).astype(np.uint8), mask)

    def test_two_discs_8px_apart_merge(self):
        mask = (disc(120, 160, 60, 60, 25) | disc(120, 160, 60, 68, 25)).astype(np.uint8)
        lm = watershed_split(mask, 25)
        assert lm.count == 1
        assert np.array_equal(lm.mask(), mask)

    def test_overlapping_pair_is_split(self):
        mask = (disc(120, 180, 60, 60, 25) | disc(120, 180, 60, 100, 25)).astype(np.uint8)
        assert connected_components(mask).count == 1
        lm = watershed_split(mask, 25)
        assert lm.count == 2
        assert np.array_equal(lm.mask(), mask)

    def test_split_never_loses_support(self):
        rng = np.random.default_rng(31)
        mask = np.zeros((150, 150), dtype=np.uint8)
        for _ in range(6):
            r = int(rng.integers(8, 26))
            cy = int(rng.integers(r, 150 - r))
            cx = int(rng.integers(r, 150 - r))
            mask |= disc(150, 150, cy, cx, r)
        lm = watershed_split(mask, 25)
        assert np.array_equal(lm.mask(), mask)

    def test_count_at_least_connected_components(self):
        rng = np.random.default_rng(13)
        mask = np.zeros((140, 140), dtype=np.uint8)
        for _ in range(5):
            r = int(rng.integers(10, 22))
            cy = int(rng.integers(r, 140 - r))
            cx = int(rng.integers(r, 140 - r))
            mask |= disc(140, 140, cy, cx, r)
        assert watershed_split(mask, 25).count >= connected_components(mask).count

    def test_empty_mask(self):
        lm = watershed_split(np.zeros((20, 20), dtype=np.uint8), 25)
        assert lm.count == 0

    def test_deterministic(self):
        mask = (disc(100, 160, 50, 50, 22) | disc(100, 160, 50, 90, 22)).astype(np.uint8)
        a = watershed_split(mask, 25)
        b = watershed_split(mask, 25)
        assert np.array_equal(a.labels, b.labels)


class TestPostprocess:
    def test_zero_heatmap_counts_zero(self):
        lm = postprocess(np.zeros((64, 64)), PostprocConfig())
        assert lm.count == 0

    def test_three_disjoint_cells(self):
        cfg = SceneConfig(width=300, height=300, cell_count=3, noise_sigma=0.0)
        _, mask, count = generate_scene(cfg, seed=5)
        assert count == 3
        heat = ideal_heatmap(mask)
        lm = postprocess(heat, PostprocConfig(threshold=0.5))
        assert lm.count == 3

    def test_clumped_cells_recovered(self):
        cfg = SceneConfig(width=420, height=420, cell_count=6, clump_prob=0.6,
                          min_center_dist=50.0, noise_sigma=0.0)
        _, mask, count = generate_scene(cfg, seed=11)
        heat = ideal_heatmap(mask)
        lm = postprocess(heat, PostprocConfig())
        assert lm.count == count

    def test_split_disabled_equals_connected_components(self):
        cfg = SceneConfig(width=300, height=300, cell_count=4, clump_prob=0.5,
                          min_center_dist=50.0, noise_sigma=0.0)
        _, mask, _ = generate_scene(cfg, seed=3)
        heat = ideal_heatmap(mask)
        lm = postprocess(heat, PostprocConfig(split_enabled=False))
        expected = connected_components(clean((heat > 0.55).astype(np.uint8), 30))
        assert lm.count == expected.count
        assert np.array_equal(lm.labels, expected.labels)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PostprocConfig(threshold=1.5)
        with pytest.raises(ValueError):
            PostprocConfig(min_area=-1)
        with pytest.raises(ValueError):
            PostprocConfig(cell_radius=0)
