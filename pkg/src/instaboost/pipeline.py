"""Per-image augmentation orchestration and the batch dataset driver.

One augmentation of one instance runs: rasterize the mask, score paste
centers (map_guided mode), sample a placement, cut the instance with a
feathered alpha, inpaint the hole, warp the patch, composite it back,
and regenerate the annotation. Instances are processed largest-first so
later (smaller) pastes composite on top. Any per-instance failure keeps
that instance untouched and is recorded in provenance; only image-level
I/O aborts a run.

Random draws per image, in order: one gate uniform, then per selected
instance one center draw (map_guided only) followed by the four jitter
draws. Callers relying on cross-process reproducibility get identical
streams because workers derive their generators from (seed, image id,
copy index), never from pool scheduling.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from PIL import Image

from .annotations import (
    DatasetIndex,
    ImageRecord,
    InstanceAnnotation,
    build_index,
    parse_dataset,
    serialize_dataset,
    validate,
)
from .errors import (
    DegenerateDistribution,
    DegenerateGeometry,
    EmptyMask,
    EmptyResult,
    FullyClipped,
    HoleCoversImage,
    IoFailure,
    ValidationFailure,
)
from .heatmap import HeatmapConfig, compute_heatmap, sample_center, to_probability
from .inpaint import InpaintConfig, inpaint
from .maskops import cut_from_mask, mask_to_bbox, rasterize
from .transform import (
    MIN_VISIBLE_ALPHA_PIXELS,
    AffineTuple,
    JitterConfig,
    sample_jitter,
    transform_annotation,
    warp_patch,
)

MODES = ("random_jitter", "map_guided")

# error types that degrade to keeping the instance rather than failing the image
_PER_INSTANCE_ERRORS = (
    DegenerateGeometry,
    EmptyMask,
    HoleCoversImage,
    FullyClipped,
    EmptyResult,
    DegenerateDistribution,
)


@dataclass(frozen=True)
class AugmentConfig:
    mode: str = "map_guided"
    apply_probability: float = 0.5
    max_instances_per_image: int | None = None
    jitter: JitterConfig = field(default_factory=JitterConfig)
    heatmap: HeatmapConfig = field(default_factory=HeatmapConfig)
    inpaint: InpaintConfig = field(default_factory=InpaintConfig)
    feather_radius: int = 3
    seed: int = 0
    forbid_overlap: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 <= self.apply_probability <= 1.0):
            raise ValueError(f"apply_probability must lie in [0,1], got {self.apply_probability}")
        if self.max_instances_per_image is not None and self.max_instances_per_image < 0:
            raise ValueError("max_instances_per_image must be >= 0")
        if self.feather_radius < 0:
            raise ValueError("feather_radius must be >= 0")


_CONFIG_SECTIONS = {"jitter": JitterConfig, "heatmap": HeatmapConfig, "inpaint": InpaintConfig}
_TUPLE_FIELDS = {
    "scale_range",
    "rotation_range_deg",
    "ring_widths",
    "ring_weights",
    "working_size",
}


def config_from_dict(doc: dict) -> AugmentConfig:
    """Build an AugmentConfig from a plain mapping, rejecting unknown keys.

    Nested sections may be given as sub-mappings ({"jitter": {...}}) or as
    dotted keys ("jitter.scale_range"); both spell the same field.
    """
    nested: dict = {}
    for key, value in doc.items():
        if not isinstance(key, str):
            raise ValueError(f"config keys must be strings, got {key!r}")
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"config key {key!r} conflicts with a scalar value")
        if isinstance(value, dict) and parts[-1] in _CONFIG_SECTIONS:
            node.setdefault(parts[-1], {}).update(value)
        else:
            node[parts[-1]] = value

    top_fields = {f for f in AugmentConfig.__dataclass_fields__}
    kwargs: dict = {}
    for key, value in nested.items():
        if key not in top_fields:
            raise ValueError(f"unknown config key: {key!r}")
        if key in _CONFIG_SECTIONS:
            section_cls = _CONFIG_SECTIONS[key]
            if not isinstance(value, dict):
                raise ValueError(f"config section {key!r} must be a mapping")
            sec_fields = set(section_cls.__dataclass_fields__)
            sec_kwargs = {}
            for skey, sval in value.items():
                if skey not in sec_fields:
                    raise ValueError(f"unknown config key: '{key}.{skey}'")
                if skey in _TUPLE_FIELDS:
                    sval = tuple(sval)
                sec_kwargs[skey] = sval
            kwargs[key] = section_cls(**sec_kwargs)
        else:
            kwargs[key] = value
    return AugmentConfig(**kwargs)


@dataclass(frozen=True)
class InstanceProvenance:
    annotation_id: int
    mode: str
    heatmap_used: bool
    moved: bool
    placement: AffineTuple | None = None
    sampled_center: tuple[float, float] | None = None
    new_annotation_id: int | None = None
    failure: str | None = None


@dataclass
class AugmentedSample:
    image: np.ndarray
    annotations: list[InstanceAnnotation]
    provenance: list[InstanceProvenance]
    applied: bool
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def moved_ids(self) -> set[int]:
        return {p.annotation_id for p in self.provenance if p.moved}


def _selection_order(anns: list[InstanceAnnotation], cap: int | None) -> list[int]:
    order = [i for i, a in enumerate(anns) if not a.iscrowd]
    order.sort(key=lambda i: -anns[i].area)  # stable: ties keep input order
    if cap is not None:
        order = order[:cap]
    return order


def _others_mask(
    anns: list[InstanceAnnotation], skip: int, width: int, height: int
) -> np.ndarray | None:
    union = np.zeros((height, width), dtype=bool)
    for i, a in enumerate(anns):
        if i == skip:
            continue
        try:
            union |= rasterize(a, width, height)
        except DegenerateGeometry:
            continue
    return union if union.any() else None


def _composite(bg: np.ndarray, warped) -> None:
    ox, oy = warped.origin
    ph, pw = warped.rgba.shape[:2]
    alpha = warped.alpha.astype(np.float64)[:, :, None]
    rgb = warped.rgba[:, :, :3].astype(np.float64)
    region = bg[oy:oy + ph, ox:ox + pw].astype(np.float64)
    blended = alpha * rgb + (1.0 - alpha) * region
    bg[oy:oy + ph, ox:ox + pw] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def augment_image(
    image: np.ndarray,
    anns: list[InstanceAnnotation],
    cfg: AugmentConfig,
    rng: np.random.Generator,
    new_id_start: int | None = None,
) -> AugmentedSample:
    """Move instances within their image per the configured strategy.

    Moved annotations receive fresh ids starting at ``new_id_start``
    (default: one past the largest input id), in processing order.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) RGB image")
    height, width = image.shape[:2]
    timings: dict[str, float] = {}

    def tick(stage: str, t0: float) -> None:
        timings[stage] = timings.get(stage, 0.0) + (time.perf_counter() - t0)

    if rng.random() >= cfg.apply_probability:
        return AugmentedSample(
            image=image.copy(), annotations=list(anns), provenance=[], applied=False
        )

    out_anns = list(anns)
    order = _selection_order(out_anns, cfg.max_instances_per_image)
    next_id = new_id_start
    if next_id is None:
        next_id = max((a.id for a in anns), default=0) + 1
    current = image.copy()
    provenance: list[InstanceProvenance] = []

    for idx in order:
        ann = out_anns[idx]
        center: tuple[float, float] | None = None
        placement: AffineTuple | None = None
        used_heatmap = False
        try:
            mask = rasterize(ann, width, height)
            bx, by, bw, bh = mask_to_bbox(mask)

            if cfg.mode == "map_guided":
                t0 = time.perf_counter()
                hm = compute_heatmap(current, mask, cfg.heatmap)
                exclusion = (
                    _others_mask(out_anns, idx, width, height) if cfg.forbid_overlap else None
                )
                pm = to_probability(hm, exclusion)
                cx_i, cy_i = sample_center(rng, pm)
                center = (float(cx_i), float(cy_i))
                used_heatmap = True
                tick("heatmap", t0)

            jit = sample_jitter(rng, bw, bh, cfg.jitter)
            t0 = time.perf_counter()
            patch, hole = cut_from_mask(current, mask, cfg.feather_radius, ann.id)
            tick("cut", t0)
            if center is not None:
                placement = AffineTuple(
                    center[0] - patch.center[0], center[1] - patch.center[1], jit.s, jit.r
                )
            else:
                placement = jit

            t0 = time.perf_counter()
            background = inpaint(current, hole, cfg.inpaint).image
            tick("inpaint", t0)

            t0 = time.perf_counter()
            warped = warp_patch(patch, placement, width, height)
            visible = int((warped.alpha > 0).sum())
            if visible < MIN_VISIBLE_ALPHA_PIXELS:
                raise FullyClipped(
                    f"only {visible} visible pixels remain (< {MIN_VISIBLE_ALPHA_PIXELS})"
                )
            new_ann = transform_annotation(ann, warped, width, height, new_id=next_id)
            tick("warp", t0)

            t0 = time.perf_counter()
            _composite(background, warped)
            tick("composite", t0)

            current = background
            out_anns[idx] = new_ann
            provenance.append(
                InstanceProvenance(
                    annotation_id=ann.id,
                    mode=cfg.mode,
                    heatmap_used=used_heatmap,
                    moved=True,
                    placement=placement,
                    sampled_center=center,
                    new_annotation_id=next_id,
                )
            )
            next_id += 1
        except _PER_INSTANCE_ERRORS as exc:
            provenance.append(
                InstanceProvenance(
                    annotation_id=ann.id,
                    mode=cfg.mode,
                    heatmap_used=used_heatmap,
                    moved=False,
                    placement=placement,
                    sampled_center=center,
                    failure=type(exc).__name__,
                )
            )

    return AugmentedSample(
        image=current, annotations=out_anns, provenance=provenance, applied=True, timings=timings
    )


@dataclass
class RunStats:
    images: int = 0
    augmented_images: int = 0
    instances_moved: int = 0
    instances_failed: int = 0
    failures: dict[str, int] = field(default_factory=dict)
    wall_seconds: float = 0.0
    stage_seconds: dict[str, float] = field(default_factory=dict)
    copies: int = 1

    def lines(self) -> list[str]:
        out = [
            f"images: {self.images}",
            f"augmented_images: {self.augmented_images}",
            f"instances_moved: {self.instances_moved}",
            f"instances_failed: {self.instances_failed}",
            f"wall_seconds: {self.wall_seconds:.3f}",
        ]
        for stage in sorted(self.stage_seconds):
            out.append(f"stage_seconds.{stage}: {self.stage_seconds[stage]:.3f}")
        for kind in sorted(self.failures):
            out.append(f"failures.{kind}: {self.failures[kind]}")
        return out

    def to_dict(self) -> dict:
        return {
            "images": self.images,
            "augmented_images": self.augmented_images,
            "instances_moved": self.instances_moved,
            "instances_failed": self.instances_failed,
            "failures": dict(self.failures),
            "wall_seconds": self.wall_seconds,
            "stage_seconds": dict(self.stage_seconds),
            "copies": self.copies,
        }


def _decimal_offset(max_id: int) -> int:
    offset = 10
    while offset <= max_id:
        offset *= 10
    return offset


def _load_rgb(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc


def _save_png(path: str, arr: np.ndarray) -> None:
    try:
        Image.fromarray(arr).save(path, format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write image {path}: {exc}") from exc


@dataclass(frozen=True)
class _Task:
    copy: int
    image: ImageRecord
    ann_ids: tuple[int, ...]
    new_id_start: int


def _run_task(
    task: _Task, index: DatasetIndex, image_dir: str, cfg: AugmentConfig
) -> AugmentedSample:
    anns = [index.annotation(i) for i in task.ann_ids]
    image = _load_rgb(os.path.join(image_dir, task.image.file_name))
    if image.shape[:2] != (task.image.height, task.image.width):
        raise ValidationFailure(
            f"image {task.image.id} file size {image.shape[1]}x{image.shape[0]} "
            f"differs from record {task.image.width}x{task.image.height}"
        )
    rng = np.random.default_rng((cfg.seed, task.image.id, task.copy))
    return augment_image(image, anns, cfg, rng, new_id_start=task.new_id_start)


def augment_dataset(
    in_ann: str,
    image_dir: str,
    out_ann: str,
    out_image_dir: str,
    cfg: AugmentConfig,
    workers: int = 1,
    copies: int = 1,
) -> RunStats:
    """Augment every image of a dataset and write the result tree.

    Output images are PNG regardless of input format. ``copies`` > 1
    emits that many augmented variants per input image with decimal-
    shifted ids; annotation/image id remapping is deterministic and
    independent of worker count.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    start = time.perf_counter()

    index = parse_dataset(in_ann)
    report = validate(index)
    if not report.ok:
        raise ValidationFailure(f"input dataset is invalid:\n{report}")

    max_img_id = max((im.id for im in index.images), default=0)
    max_ann_id = max((a.id for a in index.annotations), default=0)
    img_offset = _decimal_offset(max_img_id)
    ann_offset = _decimal_offset(max_ann_id)
    id_block = max((len(index.by_image[im.id]) for im in index.images), default=0) + 1
    fresh_base = ann_offset * copies

    tasks: list[_Task] = []
    for copy in range(copies):
        for im in sorted(index.images, key=lambda r: r.id):
            tasks.append(
                _Task(
                    copy=copy,
                    image=im,
                    ann_ids=index.by_image[im.id],
                    new_id_start=fresh_base + len(tasks) * id_block,
                )
            )

    os.makedirs(out_image_dir, exist_ok=True)
    if workers == 1:
        samples = [_run_task(t, index, image_dir, cfg) for t in tasks]
    else:
        run = partial(_run_task, index=index, image_dir=image_dir, cfg=cfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(run, tasks, chunksize=max(1, len(tasks) // (workers * 4))))

    stats = RunStats(copies=copies)
    out_images: list[ImageRecord] = []
    out_annotations: list[InstanceAnnotation] = []
    for task, sample in zip(tasks, samples):
        stem, _ = os.path.splitext(task.image.file_name)
        suffix = f"_c{task.copy}" if task.copy else ""
        file_name = f"{os.path.basename(stem)}{suffix}.png"
        new_image_id = img_offset * task.copy + task.image.id
        _save_png(os.path.join(out_image_dir, file_name), sample.image)
        out_images.append(
            replace(task.image, id=new_image_id, file_name=file_name)
        )
        for ann in sample.annotations:
            new_id = ann.id if ann.id >= fresh_base else ann_offset * task.copy + ann.id
            out_annotations.append(replace(ann, id=new_id, image_id=new_image_id))

        stats.images += 1
        if sample.applied:
            stats.augmented_images += 1
        for prov in sample.provenance:
            if prov.moved:
                stats.instances_moved += 1
            else:
                stats.instances_failed += 1
                kind = prov.failure or "unknown"
                stats.failures[kind] = stats.failures.get(kind, 0) + 1
        for stage, secs in sample.timings.items():
            stats.stage_seconds[stage] = stats.stage_seconds.get(stage, 0.0) + secs

    out_index = build_index(
        out_images,
        out_annotations,
        dict(index.categories),
        category_extra=dict(index.category_extra),
        extra=dict(index.extra),
    )
    serialize_dataset(out_index, out_ann)
    stats.wall_seconds = time.perf_counter() - start
    return stats
