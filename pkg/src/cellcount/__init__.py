"""Counting stained cells by segmentation.

Library + CLI for the counting-by-segmentation pipeline: border-weighted
loss maps, heatmap post-processing with watershed splitting, detection and
counting metrics, threshold optimization, a symbolic architecture
verifier, and a deterministic synthetic-scene generator for validation.
"""

from .raster import (
    LabelMap,
    ObjectStats,
    connected_components,
    distance_transform,
    fill_holes,
    is_degenerate_distance_field,
    object_stats,
    remove_small,
    threshold,
)
from .weightmap import WeightConfig, build_weight_map, object_border, object_weight_field, weighted_bce
from .postproc import PostprocConfig, clean, postprocess, watershed_split
from .evaluation import (
    DatasetMetrics,
    ImageMetrics,
    MatchOutcome,
    dataset_metrics,
    image_metrics,
    match_objects,
    render_match_overlay,
)
from .sweep import SweepResult, f1_curve
from .archspec import (
    ArchConfig,
    ArchGraph,
    ArchSummary,
    build_resunet,
    param_count,
    receptive_field,
    shape_inference,
    summarize,
)
from .synth import (
    AugmentOp,
    SceneConfig,
    SynthScene,
    apply_augment,
    crop_grid,
    generate_scene,
    ideal_heatmap,
    sample_scene,
)

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "ArchGraph",
    "ArchSummary",
    "AugmentOp",
    "DatasetMetrics",
    "ImageMetrics",
    "LabelMap",
    "MatchOutcome",
    "ObjectStats",
    "PostprocConfig",
    "SceneConfig",
    "SweepResult",
    "SynthScene",
    "WeightConfig",
    "apply_augment",
    "build_resunet",
    "build_weight_map",
    "clean",
    "connected_components",
    "crop_grid",
    "dataset_metrics",
    "distance_transform",
    "f1_curve",
    "fill_holes",
    "generate_scene",
    "ideal_heatmap",
    "image_metrics",
    "is_degenerate_distance_field",
    "match_objects",
    "object_border",
    "object_stats",
    "object_weight_field",
    "param_count",
    "postprocess",
    "receptive_field",
    "remove_small",
    "render_match_overlay",
    "sample_scene",
    "shape_inference",
    "summarize",
    "threshold",
    "watershed_split",
    "weighted_bce",
]
