import io

import pytest

from cellcount.postproc import PostprocConfig, postprocess
from cellcount.evaluation import dataset_metrics
from cellcount.sweep import DEFAULT_GRID, f1_curve, write_curve_csv
from cellcount.synth import SceneConfig, rasterize_blobs, sample_scene


def distractor_fixture(n_images=6, cells=0.8, distractors=0.4):
    """Scenes with flat-valued heatmaps: cell pixels at 0.8, distractor
    blobs at 0.4, background 0."""
    heatmaps, targets = [], []
    for seed in range(n_images):
        cfg = SceneConfig(width=260, height=260, cell_count=3, distractor_count=2,
                          noise_sigma=0.0)
        scene = sample_scene(cfg, seed=seed + 100)
        cell_mask = rasterize_blobs(scene.cells, cfg.height, cfg.width)
        distractor_mask = rasterize_blobs(scene.distractors, cfg.height, cfg.width)
        heat = cells * cell_mask.astype(float) + distractors * distractor_mask.astype(float)
        heatmaps.append(heat)
        targets.append(cell_mask)
    return heatmaps, targets


class TestF1Curve:
    def test_distractor_plateau(self):
        heatmaps, targets = distractor_fixture()
        result = f1_curve(heatmaps, targets)
        assert result.best_f1 == 1.0
        assert 0.40 <= result.best_threshold < 0.80
        # smallest grid point inside the plateau wins the tie-break
        assert result.best_threshold == 0.40
        for t, f1 in result.points:
            if 0.40 <= t < 0.80:
                assert f1 == 1.0
            elif t < 0.40:
                assert f1 < 1.0  # distractors become false positives

    def test_grid_above_heatmap_max(self):
        heatmaps, targets = distractor_fixture(n_images=2)
        result = f1_curve(heatmaps, targets, grid=[0.9])
        assert result.best_threshold == 0.9
        assert result.best_f1 < 1.0  # every cell missed

    def test_single_point_grid_reported_as_best(self):
        heatmaps, targets = distractor_fixture(n_images=2)
        result = f1_curve(heatmaps, targets, grid=[0.5])
        assert result.points == [(0.5, result.best_f1)]
        assert result.best_threshold == 0.5

    def test_tie_break_toward_smallest(self):
        heatmaps, targets = distractor_fixture(n_images=2, distractors=0.0)
        # without distractors every threshold below 0.8 is perfect
        result = f1_curve(heatmaps, targets, grid=[0.2, 0.4, 0.6])
        assert result.best_f1 == 1.0
        assert result.best_threshold == 0.2

    def test_best_matches_recomputation(self):
        heatmaps, targets = distractor_fixture(n_images=3)
        result = f1_curve(heatmaps, targets)
        cfg = PostprocConfig(threshold=result.best_threshold)
        dm = dataset_metrics(
            [(postprocess(h, cfg), t) for h, t in zip(heatmaps, targets)])
        assert dm.f1_micro == result.best_f1

    def test_order_invariant(self):
        heatmaps, targets = distractor_fixture(n_images=4)
        fwd = f1_curve(heatmaps, targets)
        rev = f1_curve(heatmaps[::-1], targets[::-1])
        assert fwd.points == rev.points
        assert fwd.best_threshold == rev.best_threshold

    def test_grid_refinement_never_worse(self):
        heatmaps, targets = distractor_fixture(n_images=3)
        coarse = f1_curve(heatmaps, targets, grid=[0.3, 0.6, 0.9])
        fine = f1_curve(heatmaps, targets, grid=[0.15, 0.3, 0.45, 0.6, 0.75, 0.9])
        assert fine.best_f1 >= coarse.best_f1

    def test_validation(self):
        heatmaps, targets = distractor_fixture(n_images=1)
        with pytest.raises(ValueError):
            f1_curve([], [], grid=DEFAULT_GRID)
        with pytest.raises(ValueError):
            f1_curve(heatmaps, targets, grid=[])
        with pytest.raises(ValueError):
            f1_curve(heatmaps, targets, grid=[0.5, 0.4])
        with pytest.raises(ValueError):
            f1_curve(heatmaps, targets, grid=[0.5, 1.2])

    def test_csv_determinism(self):
        heatmaps, targets = distractor_fixture(n_images=2)
        out = []
        for _ in range(2):
            result = f1_curve(heatmaps, targets, grid=[0.3, 0.5, 0.7])
            buf = io.StringIO()
            write_curve_csv(buf, result)
            out.append(buf.getvalue())
        assert out[0] == out[1]
        assert out[0].splitlines()[0] == "threshold,f1"
