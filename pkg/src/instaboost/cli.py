"""Command-line front end.

Subcommands: augment (batch dataset), heatmap (placement-score image for
one annotation), preview (single image through the pipeline), bench
(exact vs accelerated heatmap timing and fidelity).

Exit codes: 0 success, 2 usage/config error, 3 validation or unknown-id
error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import cv2
import numpy as np
from PIL import Image

from . import __version__
from .annotations import build_index, parse_dataset, serialize_dataset
from .errors import (
    DanglingReference,
    IoFailure,
    MalformedDocument,
    ValidationFailure,
)
from .heatmap import HeatmapConfig, compute_heatmap
from .maskops import rasterize
from .pipeline import augment_dataset, augment_image, config_from_dict
from . import report

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4

_PATH_KEYS = {"ann", "images", "out_ann", "out_images", "workers", "copies"}


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        size = (int(w), int(h))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"size must look like 640x480, got {text!r}") from exc
    if size[0] < 8 or size[1] < 8:
        raise argparse.ArgumentTypeError(f"size too small: {text}")
    return size


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="instaboost",
        description="Crop-paste augmentation for instance segmentation datasets.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_aug = sub.add_parser("augment", help="augment a whole dataset")
    p_aug.add_argument("--ann", help="input annotation JSON")
    p_aug.add_argument("--images", help="input image directory")
    p_aug.add_argument("--out-ann", dest="out_ann", help="output annotation JSON")
    p_aug.add_argument("--out-images", dest="out_images", help="output image directory")
    p_aug.add_argument("--config", help="JSON config file (flags override it)")
    p_aug.add_argument("--mode", choices=("random_jitter", "map_guided"))
    p_aug.add_argument("--apply-probability", dest="apply_probability", type=float)
    p_aug.add_argument("--seed", type=int)
    p_aug.add_argument("--max-instances", dest="max_instances_per_image", type=int)
    p_aug.add_argument("--feather-radius", dest="feather_radius", type=int)
    p_aug.add_argument("--forbid-overlap", dest="forbid_overlap", action="store_true", default=None)
    p_aug.add_argument("--workers", type=int, help="default: $INSTABOOST_WORKERS or 1")
    p_aug.add_argument("--copies", type=int, help="augmented variants per input image")
    p_aug.add_argument("--json-stats", action="store_true", help="also print stats as JSON")
    p_aug.add_argument("--report-dir", help="write stats CSV and timing figure here")
    p_aug.set_defaults(func=cmd_augment)

    p_hm = sub.add_parser("heatmap", help="render the placement-score map for one annotation")
    p_hm.add_argument("--ann", required=True)
    p_hm.add_argument("--images", required=True)
    p_hm.add_argument("--annotation-id", dest="annotation_id", type=int, required=True)
    p_hm.add_argument("--image-id", dest="image_id", type=int)
    p_hm.add_argument("--out", required=True, help="output PNG path")
    p_hm.set_defaults(func=cmd_heatmap)

    p_prev = sub.add_parser("preview", help="run one image through the pipeline")
    p_prev.add_argument("--ann", required=True)
    p_prev.add_argument("--images", required=True)
    p_prev.add_argument("--image-id", dest="image_id", type=int, required=True)
    p_prev.add_argument("--out-image", dest="out_image", required=True)
    p_prev.add_argument("--out-ann", dest="out_ann")
    p_prev.add_argument("--config")
    p_prev.add_argument("--mode", choices=("random_jitter", "map_guided"))
    p_prev.add_argument("--apply-probability", dest="apply_probability", type=float)
    p_prev.add_argument("--seed", type=int)
    p_prev.set_defaults(func=cmd_preview)

    p_bench = sub.add_parser("bench", help="time exact vs accelerated heatmaps")
    p_bench.add_argument(
        "--size", type=_parse_size, action="append", help="WxH, repeatable (default 360x240)"
    )
    p_bench.add_argument("--iters", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument(
        "--exact",
        choices=("auto", "always", "never"),
        default="auto",
        help="auto skips the exact grid above 360x240-equivalent area",
    )
    p_bench.add_argument("--out-dir", dest="out_dir", help="write CSV and figure here")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return doc


def _merge_config(args: argparse.Namespace, file_doc: dict) -> dict:
    """Config-file document with flag overrides applied (flags win)."""
    doc = {k: v for k, v in file_doc.items() if k not in _PATH_KEYS}
    for key in (
        "mode",
        "apply_probability",
        "seed",
        "max_instances_per_image",
        "feather_radius",
        "forbid_overlap",
    ):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    return doc


def _env_workers() -> int | None:
    raw = os.environ.get("INSTABOOST_WORKERS")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"INSTABOOST_WORKERS must be an integer, got {raw!r}") from exc


def _usage_fail(message: str) -> int:
    print(f"usage error: {message}", file=sys.stderr)
    return EXIT_USAGE


def cmd_augment(args: argparse.Namespace) -> int:
    file_doc = _load_config_file(args.config) if args.config else {}
    paths = {}
    for key in ("ann", "images", "out_ann", "out_images"):
        paths[key] = getattr(args, key) or file_doc.get(key)
        if not paths[key]:
            return _usage_fail(f"--{key.replace('_', '-')} is required (flag or config file)")
    cfg = config_from_dict(_merge_config(args, file_doc))
    workers = args.workers or file_doc.get("workers") or _env_workers() or 1
    copies = args.copies or file_doc.get("copies") or 1

    stats = augment_dataset(
        paths["ann"], paths["images"], paths["out_ann"], paths["out_images"],
        cfg, workers=workers, copies=copies,
    )
    for line in stats.lines():
        print(line)
    if args.json_stats:
        print(json.dumps(stats.to_dict(), sort_keys=True))
    if args.report_dir:
        os.makedirs(args.report_dir, exist_ok=True)
        doc = stats.to_dict()
        rows = [[k, doc[k]] for k in sorted(doc) if not isinstance(doc[k], dict)]
        rows += [
            [f"{group}.{k}", v]
            for group in ("stage_seconds", "failures")
            for k, v in sorted(doc[group].items())
        ]
        report.write_csv(os.path.join(args.report_dir, "stats.csv"), ["key", "value"], rows)
        report.save_stage_figure(
            stats.stage_seconds, os.path.join(args.report_dir, "stage_timing.png")
        )
    return EXIT_OK


def _load_rgb(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc


def cmd_heatmap(args: argparse.Namespace) -> int:
    index = parse_dataset(args.ann)
    try:
        ann = index.annotation(args.annotation_id)
    except KeyError:
        print(f"error: unknown annotation id {args.annotation_id}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.image_id is not None and args.image_id != ann.image_id:
        print(
            f"error: annotation {ann.id} belongs to image {ann.image_id}, "
            f"not {args.image_id}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    rec = index.image(ann.image_id)
    image = _load_rgb(os.path.join(args.images, rec.file_name))
    mask = rasterize(ann, rec.width, rec.height)
    hm = compute_heatmap(image, mask, HeatmapConfig())
    report.save_heatmap_png(hm, args.out)

    finite = hm.distance[np.isfinite(hm.distance)]
    lo = float(finite.min()) if finite.size else float("inf")
    hi = float(finite.max()) if finite.size else float("inf")
    ay, ax_ = np.unravel_index(int(np.argmax(hm.upsampled)), hm.upsampled.shape)
    print(f"m: {lo:.6g}")
    print(f"M: {hi:.6g}")
    print(f"argmax: ({int(ax_)}, {int(ay)})")
    print(f"degenerate: {'true' if hm.degenerate else 'false'}")
    print(f"all_infinite: {'true' if hm.all_infinite else 'false'}")
    return EXIT_OK


def cmd_preview(args: argparse.Namespace) -> int:
    file_doc = _load_config_file(args.config) if args.config else {}
    cfg = config_from_dict(_merge_config(args, file_doc))

    index = parse_dataset(args.ann)
    try:
        rec = index.image(args.image_id)
    except KeyError:
        print(f"error: unknown image id {args.image_id}", file=sys.stderr)
        return EXIT_VALIDATION
    anns = index.annotations_for(rec.id)
    image = _load_rgb(os.path.join(args.images, rec.file_name))

    rng = np.random.default_rng(cfg.seed)
    sample = augment_image(image, anns, cfg, rng)

    try:
        Image.fromarray(sample.image).save(args.out_image, format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write {args.out_image}: {exc}") from exc
    if args.out_ann:
        out_index = build_index(
            [rec], sample.annotations, dict(index.categories),
            category_extra=dict(index.category_extra),
        )
        serialize_dataset(out_index, args.out_ann)

    print(f"applied: {'true' if sample.applied else 'false'}")
    for prov in sample.provenance:
        if prov.moved:
            t = prov.placement
            print(
                f"instance {prov.annotation_id}: moved "
                f"t=({t.t_x:.2f},{t.t_y:.2f}) s={t.s:.3f} r={t.r:.2f} "
                f"-> annotation {prov.new_annotation_id}"
            )
        else:
            print(f"instance {prov.annotation_id}: kept ({prov.failure})")
    return EXIT_OK


def _bench_fixture(width: int, height: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Smooth random texture plus an elliptical instance mask."""
    rng = np.random.default_rng(seed)
    coarse = rng.random((max(2, height // 8), max(2, width // 8), 3))
    tex = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_CUBIC)
    image = np.clip(40 + tex * 175, 0, 255).astype(np.uint8)
    yy, xx = np.mgrid[0:height, 0:width]
    cx, cy = width * 0.38, height * 0.52
    rx, ry = width * 0.11, height * 0.16
    mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    return image, mask


def _median_time(fn, iters: int) -> float:
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)) * 1000.0


def cmd_bench(args: argparse.Namespace) -> int:
    sizes = args.size or [(360, 240)]
    iters = max(1, args.iters)
    rows = []
    for width, height in sizes:
        image, mask = _bench_fixture(width, height, args.seed)
        accel_cfg = HeatmapConfig()
        accel_ms = _median_time(lambda: compute_heatmap(image, mask, accel_cfg), iters)
        accel = compute_heatmap(image, mask, accel_cfg)

        want_exact = args.exact == "always" or (
            args.exact == "auto" and width * height <= 360 * 240
        )
        row: dict = {"size": f"{width}x{height}", "accelerated_ms": accel_ms}
        print(f"size: {width}x{height}")
        print(f"accelerated_ms: {accel_ms:.1f}")
        if want_exact:
            exact_cfg = HeatmapConfig(working_size=(width, height))
            exact_ms = _median_time(lambda: compute_heatmap(image, mask, exact_cfg), 1)
            exact = compute_heatmap(image, mask, exact_cfg)
            r = float(np.corrcoef(exact.upsampled.ravel(), accel.upsampled.ravel())[0, 1])
            row.update(exact_ms=exact_ms, pearson_r=r)
            print(f"exact_ms: {exact_ms:.1f}")
            print(f"pearson_r: {r:.4f}")
            print(f"fidelity: {'PASS' if r >= 0.8 else 'FAIL'} (threshold 0.8)")
        else:
            print("exact_ms: skipped")
        rows.append(row)

    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        header = ["size", "accelerated_ms", "exact_ms", "pearson_r"]
        csv_rows = [[r.get(k, "") for k in header] for r in rows]
        report.write_csv(os.path.join(args.out_dir, "bench.csv"), header, csv_rows)
        report.save_bench_figure(rows, os.path.join(args.out_dir, "bench.png"))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MalformedDocument, DanglingReference, ValidationFailure) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except IoFailure as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        return _usage_fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
