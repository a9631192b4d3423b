"""Command-line interface.

Subcommands: weightmap, count, eval, sweep, synth, augment, archinfo.
Every run is reproducible (identical flags and seed give byte-identical
outputs), output files are written atomically (temp file + rename), and a
``--config`` key=value file can supply any option, with command-line flags
taking precedence.  Exit codes: 0 success, 1 runtime or data error,
2 usage error.  ``CELLCOUNT_THREADS`` caps per-file parallelism in batch
subcommands.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import archspec, evaluation, pngio, postproc, sweep, synth, weightmap
from .raster import LabelMap, connected_components, object_stats


class UsageError(Exception):
    pass


@contextmanager
def atomic_output(path: Path, mode: str = "w"):
    """Write to a sibling temp file and rename on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    try:
        with open(tmp, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def atomic_write_call(path: Path, writer) -> None:
    """Run a path-taking writer against a temp file, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def thread_count() -> int:
    env = os.environ.get("CELLCOUNT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"CELLCOUNT_THREADS must be an integer, got {env!r}") from exc
    return min(8, os.cpu_count() or 1)


def parallel_map(fn, items):
    items = list(items)
    workers = thread_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def parse_config_file(path) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


class Options:
    """Resolution order: command line, then config file, then default."""

    def __init__(self, args: argparse.Namespace, spec: dict):
        self.args = args
        self.spec = spec
        config = getattr(args, "config", None)
        self.config = parse_config_file(config) if config else {}

    def __getattr__(self, key):
        if key not in self.spec:
            return getattr(self.args, key)
        convert, default = self.spec[key]
        given = getattr(self.args, key, None)
        if given is not None:
            return given
        if key in self.config:
            try:
                return convert(self.config[key])
            except ValueError as exc:
                raise UsageError(f"config key {key}: {exc}") from exc
        return default


def require(condition: bool, message: str) -> None:
    if not condition:
        raise UsageError(message)


def list_pngs(path: Path) -> list[str]:
    if not path.is_dir():
        raise FileNotFoundError(f"{path} is not a directory")
    return sorted(p.name for p in path.glob("*.png"))


def load_label_map(path) -> LabelMap:
    """Prediction PNG: binary masks are labelled, 16-bit label ids renumbered."""
    arr = pngio.read_gray(path)
    if arr.dtype == np.uint8:
        if not np.isin(np.unique(arr), (0, 255)).all():
            raise ValueError(f"{path}: 8-bit prediction must contain only 0 and 255")
        return connected_components((arr == 255).astype(np.uint8), connectivity=8)
    ids = np.unique(arr)
    ids = ids[ids > 0]
    relabel = np.zeros(int(arr.max()) + 1, dtype=np.int32)
    relabel[ids] = np.arange(1, ids.size + 1, dtype=np.int32)
    return LabelMap(labels=relabel[arr], count=int(ids.size))


# ---------------------------------------------------------------- weightmap

WEIGHTMAP_OPTS = {
    "sigma": (float, 25.0),
    "fg": (float, 1.0),
    "bg": (float, 1.5),
    "foreground_proximity": (parse_bool, True),
}


def cmd_weightmap(args) -> int:
    opt = Options(args, WEIGHTMAP_OPTS)
    require(opt.sigma > 0, f"--sigma must be > 0, got {opt.sigma}")
    require(opt.fg > 0 and opt.bg > 0, "class base weights must be > 0")
    mask = pngio.read_mask(args.mask)
    cfg = weightmap.WeightConfig(
        sigma=opt.sigma,
        foreground_base=opt.fg,
        background_base=opt.bg,
        include_foreground_proximity=opt.foreground_proximity,
    )
    weights = weightmap.build_weight_map(mask, cfg)
    atomic_write_call(Path(args.out), lambda p: pngio.write_weight_map(p, weights))
    if args.png:
        atomic_write_call(Path(args.png), lambda p: pngio.write_weight_map_png(p, weights))
    return 0


# -------------------------------------------------------------------- count

COUNT_OPTS = {
    "threshold": (float, 0.55),
    "min_area": (int, 30),
    "cell_radius": (int, 25),
    "split": (parse_bool, True),
}


def postproc_config(opt) -> postproc.PostprocConfig:
    require(0.0 <= opt.threshold <= 1.0, f"--threshold must be in [0, 1], got {opt.threshold}")
    require(opt.min_area >= 0, f"--min-area must be >= 0, got {opt.min_area}")
    require(opt.cell_radius >= 1, f"--cell-radius must be >= 1, got {opt.cell_radius}")
    return postproc.PostprocConfig(
        threshold=opt.threshold,
        min_area=opt.min_area,
        cell_radius=opt.cell_radius,
        split_enabled=opt.split,
    )


def cmd_count(args) -> int:
    opt = Options(args, COUNT_OPTS)
    cfg = postproc_config(opt)
    heat = pngio.read_probability(args.heatmap)
    lm = postproc.postprocess(heat, cfg)
    print(lm.count)
    stats = object_stats(lm)
    if args.report:
        report = {
            "file": str(args.heatmap),
            "count": lm.count,
            "threshold": cfg.threshold,
            "min_area": cfg.min_area,
            "cell_radius": cfg.cell_radius,
            "split": cfg.split_enabled,
            "objects": [
                {
                    "label": s.label,
                    "area": s.area,
                    "centroid": [round(s.centroid[0], 3), round(s.centroid[1], 3)],
                    "bbox": list(s.bbox),
                }
                for s in stats
            ],
        }
        with atomic_output(Path(args.report)) as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    if args.overlay:
        img = np.repeat((np.clip(heat, 0, 1) * 255).astype(np.uint8)[:, :, None], 3, axis=2)
        for s in stats:
            evaluation.draw_box(img, s.bbox, evaluation.TP_COLOR)
        atomic_write_call(Path(args.overlay), lambda p: pngio.write_rgb(p, img))
    return 0


# --------------------------------------------------------------------- eval

EVAL_OPTS = {
    "match_dist": (float, 50.0),
}


def paired_names(a_dir: Path, b_dir: Path, a_role: str, b_role: str) -> list[str]:
    a_names = set(list_pngs(a_dir))
    b_names = set(list_pngs(b_dir))
    if not a_names:
        raise FileNotFoundError(f"no PNG files in {a_dir}")
    if a_names != b_names:
        only_a = sorted(a_names - b_names)
        only_b = sorted(b_names - a_names)
        lines = [f"filename mismatch between {a_role} and {b_role}:"]
        if only_a:
            lines.append(f"  only in {a_role}: {', '.join(only_a)}")
        if only_b:
            lines.append(f"  only in {b_role}: {', '.join(only_b)}")
        raise FileNotFoundError("\n".join(lines))
    return sorted(a_names)


def cmd_eval(args) -> int:
    opt = Options(args, EVAL_OPTS)
    require(opt.match_dist > 0, f"--match-dist must be > 0, got {opt.match_dist}")
    pred_dir = Path(args.pred_dir)
    target_dir = Path(args.target_dir)
    out_dir = Path(args.out_dir)
    names = paired_names(pred_dir, target_dir, "predictions", "targets")

    def evaluate(name: str):
        pred = load_label_map(pred_dir / name)
        target = pngio.read_mask(target_dir / name)
        metrics = evaluation.image_metrics(pred, target, opt.match_dist)
        overlay = evaluation.render_match_overlay(pred, target, opt.match_dist)
        return metrics, overlay

    results = parallel_map(evaluate, names)
    dm = evaluation.aggregate_metrics([m for m, _ in results])
    with atomic_output(out_dir / "report.csv") as fh:
        evaluation.write_report_csv(fh, names, dm)
    with atomic_output(out_dir / "report.json") as fh:
        evaluation.write_report_json(fh, names, dm)
    for name, (_, overlay) in zip(names, results):
        atomic_write_call(out_dir / "overlays" / name,
                          lambda p, o=overlay: pngio.write_rgb(p, o))
    print(f"f1_micro={dm.f1_micro:.4f} mean_iou={dm.mean_iou:.4f} "
          f"mae={dm.mae:.4f} medae={dm.medae:.4f} images={len(names)}")
    return 0


# -------------------------------------------------------------------- sweep

SWEEP_OPTS = {
    "grid": (str, "0.05:0.95:0.05"),
    "match_dist": (float, 50.0),
    "min_area": (int, 30),
    "cell_radius": (int, 25),
    "split": (parse_bool, True),
}


def parse_grid(spec: str) -> list[float]:
    try:
        if ":" in spec:
            start, stop, step = (float(x) for x in spec.split(":"))
            if step <= 0:
                raise ValueError("step must be > 0")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 10) for i in range(count)]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --grid {spec!r}: {exc}") from exc


def cmd_sweep(args) -> int:
    opt = Options(args, SWEEP_OPTS)
    grid = parse_grid(opt.grid)
    require(bool(grid), "--grid produced no thresholds")
    heat_dir = Path(args.heatmap_dir)
    target_dir = Path(args.target_dir)
    names = paired_names(heat_dir, target_dir, "heatmaps", "targets")
    heatmaps = parallel_map(lambda n: pngio.read_probability(heat_dir / n), names)
    targets = parallel_map(lambda n: pngio.read_mask(target_dir / n), names)
    cfg = postproc_config(_SweepCfgView(opt))
    result = sweep.f1_curve(heatmaps, targets, cfg, grid, opt.match_dist)
    with atomic_output(Path(args.out)) as fh:
        sweep.write_curve_csv(fh, result)
    print(f"best_threshold={result.best_threshold:.4f} best_f1={result.best_f1:.4f}")
    return 0


class _SweepCfgView:
    """postproc_config adapter: sweep has no fixed threshold of its own."""

    def __init__(self, opt):
        self.threshold = 0.5
        self.min_area = opt.min_area
        self.cell_radius = opt.cell_radius
        self.split = opt.split


# -------------------------------------------------------------------- synth

SYNTH_OPTS = {
    "n": (int, 5),
    "seed": (int, 0),
    "cells": (str, "10"),
    "size": (str, "512x512"),
    "clump_prob": (float, 0.0),
    "min_center_dist": (float, 50.0),
    "distractors": (int, 0),
    "noise": (float, 0.02),
    "heatmap_softness": (float, 0.0),
    "heatmap_noise": (float, 0.0),
    "rgb": (parse_bool, False),
}


def parse_size(spec: str) -> tuple[int, int]:
    try:
        w, h = (int(x) for x in spec.lower().split("x"))
        if w < 1 or h < 1:
            raise ValueError("dimensions must be >= 1")
        return w, h
    except ValueError as exc:
        raise UsageError(f"bad --size {spec!r}: expected WIDTHxHEIGHT") from exc


def parse_cells(spec: str) -> tuple[int, int]:
    try:
        if ":" in spec:
            lo, hi = (int(x) for x in spec.split(":"))
        else:
            lo = hi = int(spec)
        if lo < 0 or hi < lo:
            raise ValueError("expected 0 <= low <= high")
        return lo, hi
    except ValueError as exc:
        raise UsageError(f"bad --cells {spec!r}: expected N or LOW:HIGH") from exc


def cmd_synth(args) -> int:
    opt = Options(args, SYNTH_OPTS)
    require(opt.n >= 1, f"--n must be >= 1, got {opt.n}")
    width, height = parse_size(opt.size)
    lo, hi = parse_cells(opt.cells)
    require(0.0 <= opt.clump_prob <= 1.0, "--clump-prob must be in [0, 1]")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_rows = []
    for seed in range(opt.seed, opt.seed + opt.n):
        n_cells = lo if lo == hi else int(np.random.default_rng([seed, 0xC0DE]).integers(lo, hi + 1))
        cfg = synth.SceneConfig(
            width=width,
            height=height,
            cell_count=n_cells,
            distractor_count=opt.distractors,
            noise_sigma=opt.noise,
            clump_prob=opt.clump_prob,
            min_center_dist=opt.min_center_dist,
            rgb=opt.rgb,
        )
        scene = synth.sample_scene(cfg, seed)
        manifest_rows.extend(
            synth.write_scene_files(out_dir, scene, rgb=opt.rgb,
                                    heatmap_softness=opt.heatmap_softness,
                                    heatmap_noise=opt.heatmap_noise)
        )
    with atomic_output(out_dir / "manifest.csv") as fh:
        synth.write_manifest(fh, manifest_rows)
    print(f"wrote {opt.n} scenes to {out_dir}")
    return 0


# ------------------------------------------------------------------ augment

AUGMENT_OPTS = {
    "op": (str, "rot90"),
    "k": (int, 1),
    "sigma": (float, 0.05),
    "scale": (float, 1.0),
    "alpha": (float, 300.0),
    "sigma_e": (float, 10.0),
    "seed": (int, 0),
}


def cmd_augment(args) -> int:
    opt = Options(args, AUGMENT_OPTS)
    require(opt.op in synth.AugmentOp.KINDS,
            f"--op must be one of {', '.join(synth.AugmentOp.KINDS)}")
    image_path = Path(args.image)
    mask_path = Path(args.mask)
    rgb = False
    try:
        raw = pngio.read_gray(image_path)
        image = raw.astype(np.float64) / (255.0 if raw.dtype == np.uint8 else 65535.0)
    except ValueError:
        image = pngio.read_rgb(image_path).astype(np.float64) / 255.0
        rgb = True
    mask = pngio.read_mask(mask_path)
    op = synth.AugmentOp(kind=opt.op, k=opt.k, sigma=opt.sigma, scale=opt.scale,
                         alpha=opt.alpha, sigma_e=opt.sigma_e, seed=opt.seed)
    aug_image, aug_mask = synth.apply_augment(image, mask, op)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img8 = np.rint(aug_image * 255).astype(np.uint8)
    image_out = out_dir / f"{image_path.stem}_aug.png"
    if rgb:
        atomic_write_call(image_out, lambda p: pngio.write_rgb(p, img8))
    else:
        atomic_write_call(image_out, lambda p: pngio.write_gray(p, img8))
    atomic_write_call(out_dir / f"{mask_path.stem}_aug.png",
                      lambda p: pngio.write_mask(p, aug_mask))
    return 0


# ----------------------------------------------------------------- archinfo

ARCHINFO_OPTS = {
    "input": (str, "512x512x3"),
    "depth": (int, 4),
    "base_filters": (int, 16),
    "growth": (int, 2),
    "colorspace": (parse_bool, True),
    "extra_bottleneck": (parse_bool, True),
    "bottleneck_kernel": (int, 5),
    "kernel": (int, 3),
    "transposed": (parse_bool, False),
}


def parse_input_shape(spec: str) -> tuple[int, int, int]:
    try:
        h, w, c = (int(x) for x in spec.lower().split("x"))
        if h < 1 or w < 1 or c < 1:
            raise ValueError("dimensions must be >= 1")
        return h, w, c
    except ValueError as exc:
        raise UsageError(f"bad --input {spec!r}: expected HxWxC") from exc


def cmd_archinfo(args) -> int:
    opt = Options(args, ARCHINFO_OPTS)
    shape = parse_input_shape(opt.input)
    try:
        cfg = archspec.ArchConfig(
            depth=opt.depth,
            base_filters=opt.base_filters,
            filter_growth=opt.growth,
            colorspace_conv=opt.colorspace,
            extra_bottleneck_block=opt.extra_bottleneck,
            bottleneck_kernel=opt.bottleneck_kernel,
            standard_kernel=opt.kernel,
            transposed_upsample=opt.transposed,
        )
        graph = archspec.build_resunet(cfg)
        info = archspec.summary_json_dict(graph, shape)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = json.dumps(info, indent=2) + "\n"
    if args.out:
        with atomic_output(Path(args.out)) as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------- parser

def _opt_flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def add_spec_options(parser: argparse.ArgumentParser, spec: dict) -> None:
    """Options default to None so the config file can fill them in."""
    for key, (convert, default) in spec.items():
        flag = _opt_flag(key)
        if convert is parse_bool:
            group = parser.add_mutually_exclusive_group()
            group.add_argument(flag, dest=key, action="store_true", default=None,
                               help=f"(default: {default})")
            group.add_argument("--no-" + flag[2:], dest=key, action="store_false",
                               default=None, help=argparse.SUPPRESS)
        else:
            parser.add_argument(flag, dest=key, type=convert, default=None,
                                metavar=key.upper(),
                                help=f"(default: {default})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellcount",
        description="Counting-by-segmentation toolkit: weighted maps, "
                    "heatmap post-processing, evaluation, and synthetic scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weightmap", help="build a border-weighted loss map from a mask PNG")
    p.add_argument("mask", help="binary mask PNG ({0,255})")
    p.add_argument("-o", "--out", required=True, help="output CCWM file")
    p.add_argument("--png", help="optional 16-bit PNG visualization")
    p.add_argument("--config", help="key=value config file")
    add_spec_options(p, WEIGHTMAP_OPTS)
    p.set_defaults(func=cmd_weightmap)

    p = sub.add_parser("count", help="threshold, post-process and count a heatmap PNG")
    p.add_argument("heatmap", help="grayscale heatmap PNG")
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--overlay", help="overlay PNG path")
    p.add_argument("--config", help="key=value config file")
    add_spec_options(p, COUNT_OPTS)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("eval", help="match predictions against targets and report metrics")
    p.add_argument("pred_dir", help="directory of prediction PNGs")
    p.add_argument("target_dir", help="directory of target mask PNGs (same filenames)")
    p.add_argument("-o", "--out-dir", required=True, help="report directory")
    p.add_argument("--config", help="key=value config file")
    add_spec_options(p, EVAL_OPTS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="find the F1-maximizing binarization threshold")
    p.add_argument("heatmap_dir", help="directory of heatmap PNGs")
    p.add_argument("target_dir", help="directory of target mask PNGs (same filenames)")
    p.add_argument("-o", "--out", required=True, help="curve CSV path")
    p.add_argument("--config", help="key=value config file")
    add_spec_options(p, SWEEP_OPTS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate synthetic scenes with ground truth")
    p.add_argument("-o", "--out-dir", required=True, help="output directory")
    p.add_argument("--config", help="key=value config file")
    add_spec_options(p, SYNTH_OPTS)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="apply one augmentation to an image/mask pair")
    p.add_argument("image", help="image PNG (grayscale or RGB)")
    p.add_argument("mask", help="mask PNG ({0,255})")
    p.add_argument("-o", "--out-dir", required=True, help="output directory")
    p.add_argument("--config", help="key=value config file")
    add_spec_options(p, AUGMENT_OPTS)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("archinfo", help="shapes, parameters and receptive field of the model graph")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.add_argument("--config", help="key=value config file")
    add_spec_options(p, ARCHINFO_OPTS)
    p.set_defaults(func=cmd_archinfo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cellcount {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"cellcount {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
