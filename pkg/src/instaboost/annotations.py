"""COCO-format dataset loading, validation, and serialization.

The on-disk document is standard COCO instance JSON: top-level ``images``,
``annotations`` and ``categories`` arrays, polygon segmentations as flat
coordinate lists, RLE segmentations as ``{"size": [h, w], "counts": ...}``.
Unknown keys (top-level or per record) are carried through untouched so an
augmented dataset stays consumable by whatever reads the original.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

from .errors import DanglingReference, IoFailure, MalformedDocument

Segmentation = Union[list, dict]


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InstanceAnnotation:
    id: int
    image_id: int
    category_id: int
    segmentation: Segmentation
    bbox: tuple[float, float, float, float]
    area: float
    iscrowd: int = 0
    extra: dict = field(default_factory=dict)

    def has_rle(self) -> bool:
        return isinstance(self.segmentation, dict)

    def polygons(self) -> list[list[float]]:
        if self.has_rle():
            return []
        return self.segmentation  # type: ignore[return-value]


@dataclass(frozen=True)
class DatasetIndex:
    """Immutable in-memory dataset; safe to share across workers."""

    images: tuple[ImageRecord, ...]
    annotations: tuple[InstanceAnnotation, ...]
    categories: dict[int, str]
    by_image: dict[int, tuple[int, ...]]
    category_extra: dict[int, dict] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def image(self, image_id: int) -> ImageRecord:
        for img in self.images:
            if img.id == image_id:
                return img
        raise KeyError(f"no image with id {image_id}")

    def annotation(self, ann_id: int) -> InstanceAnnotation:
        for ann in self.annotations:
            if ann.id == ann_id:
                return ann
        raise KeyError(f"no annotation with id {ann_id}")

    def annotations_for(self, image_id: int) -> list[InstanceAnnotation]:
        ids = set(self.by_image.get(image_id, ()))
        return [a for a in self.annotations if a.id in ids]


@dataclass
class ValidationIssue:
    kind: str  # "image" | "annotation" | "index"
    record_id: int | None
    message: str


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, kind: str, record_id: int | None, message: str) -> None:
        self.issues.append(ValidationIssue(kind, record_id, message))

    def __str__(self) -> str:
        if self.ok:
            return "dataset valid"
        lines = [f"{i.kind} {i.record_id}: {i.message}" for i in self.issues]
        return "\n".join(lines)


_IMAGE_KEYS = ("id", "file_name", "width", "height")
_ANN_KEYS = ("id", "image_id", "category_id", "segmentation", "bbox", "area", "iscrowd")
_CAT_KEYS = ("id", "name")


def build_index(
    images: list[ImageRecord],
    annotations: list[InstanceAnnotation],
    categories: dict[int, str],
    category_extra: dict[int, dict] | None = None,
    extra: dict | None = None,
) -> DatasetIndex:
    """Assemble a DatasetIndex, refusing dangling or duplicated ids."""
    image_ids = [img.id for img in images]
    if len(set(image_ids)) != len(image_ids):
        dup = _first_duplicate(image_ids)
        raise MalformedDocument(f"duplicate image id {dup}")
    ann_ids = [a.id for a in annotations]
    if len(set(ann_ids)) != len(ann_ids):
        dup = _first_duplicate(ann_ids)
        raise MalformedDocument(f"duplicate annotation id {dup}")
    known_images = set(image_ids)
    by_image: dict[int, list[int]] = {i: [] for i in image_ids}
    for ann in annotations:
        if ann.image_id not in known_images:
            raise DanglingReference(
                f"annotation {ann.id} references missing image {ann.image_id}"
            )
        if ann.category_id not in categories:
            raise DanglingReference(
                f"annotation {ann.id} references missing category {ann.category_id}"
            )
        by_image[ann.image_id].append(ann.id)
    return DatasetIndex(
        images=tuple(images),
        annotations=tuple(annotations),
        categories=dict(categories),
        by_image={k: tuple(v) for k, v in by_image.items()},
        category_extra=dict(category_extra or {}),
        extra=dict(extra or {}),
    )


def _first_duplicate(ids: list[int]) -> int:
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            return i
        seen.add(i)
    return ids[-1]


def _require(record: dict, keys: tuple[str, ...], what: str) -> None:
    for key in keys:
        if key not in record:
            rid = record.get("id", "?")
            raise MalformedDocument(f"{what} {rid} is missing field '{key}'")


def parse_dataset(annotation_file: str | Path) -> DatasetIndex:
    """Load a COCO-style annotation document into a DatasetIndex."""
    path = Path(annotation_file)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path} is not valid JSON: {exc}") from exc
    return parse_document(doc)


def parse_document(doc: Any) -> DatasetIndex:
    """Build a DatasetIndex from an already-loaded COCO document."""
    if not isinstance(doc, dict):
        raise MalformedDocument("top level must be an object")
    for key in ("images", "annotations", "categories"):
        if key not in doc or not isinstance(doc[key], list):
            raise MalformedDocument(f"missing or non-array top-level key '{key}'")

    images = []
    for rec in doc["images"]:
        if not isinstance(rec, dict):
            raise MalformedDocument("image record is not an object")
        _require(rec, _IMAGE_KEYS, "image")
        images.append(
            ImageRecord(
                id=int(rec["id"]),
                file_name=str(rec["file_name"]),
                width=int(rec["width"]),
                height=int(rec["height"]),
                extra={k: v for k, v in rec.items() if k not in _IMAGE_KEYS},
            )
        )

    categories: dict[int, str] = {}
    category_extra: dict[int, dict] = {}
    for rec in doc["categories"]:
        if not isinstance(rec, dict):
            raise MalformedDocument("category record is not an object")
        _require(rec, _CAT_KEYS, "category")
        cid = int(rec["id"])
        if cid in categories:
            raise MalformedDocument(f"duplicate category id {cid}")
        categories[cid] = str(rec["name"])
        category_extra[cid] = {k: v for k, v in rec.items() if k not in _CAT_KEYS}

    annotations = []
    for rec in doc["annotations"]:
        if not isinstance(rec, dict):
            raise MalformedDocument("annotation record is not an object")
        _require(rec, _ANN_KEYS[:-1], "annotation")  # iscrowd may be absent
        seg = rec["segmentation"]
        if not isinstance(seg, (list, dict)):
            raise MalformedDocument(
                f"annotation {rec['id']} has unsupported segmentation type"
            )
        bbox = rec["bbox"]
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise MalformedDocument(f"annotation {rec['id']} bbox must have 4 entries")
        annotations.append(
            InstanceAnnotation(
                id=int(rec["id"]),
                image_id=int(rec["image_id"]),
                category_id=int(rec["category_id"]),
                segmentation=seg,
                bbox=tuple(float(v) for v in bbox),
                area=float(rec["area"]),
                iscrowd=int(rec.get("iscrowd", 0)),
                extra={k: v for k, v in rec.items() if k not in _ANN_KEYS},
            )
        )

    extra = {
        k: v for k, v in doc.items() if k not in ("images", "annotations", "categories")
    }
    return build_index(images, annotations, categories, category_extra, extra)


def to_document(index: DatasetIndex) -> dict:
    doc: dict[str, Any] = dict(index.extra)
    doc["images"] = [
        {
            "id": img.id,
            "file_name": img.file_name,
            "width": img.width,
            "height": img.height,
            **img.extra,
        }
        for img in index.images
    ]
    doc["annotations"] = [
        {
            "id": ann.id,
            "image_id": ann.image_id,
            "category_id": ann.category_id,
            "segmentation": ann.segmentation,
            "bbox": list(ann.bbox),
            "area": ann.area,
            "iscrowd": ann.iscrowd,
            **ann.extra,
        }
        for ann in index.annotations
    ]
    doc["categories"] = [
        {"id": cid, "name": name, **index.category_extra.get(cid, {})}
        for cid, name in index.categories.items()
    ]
    return doc


def serialize_dataset(index: DatasetIndex, out: str | Path) -> None:
    """Write the index back to a COCO-style JSON document."""
    path = Path(out)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(to_document(index), fh)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def validate(index: DatasetIndex) -> ValidationReport:
    """Check every record invariant; violations become report entries."""
    report = ValidationReport()
    images_by_id: dict[int, ImageRecord] = {}
    for img in index.images:
        if img.id in images_by_id:
            report.add("image", img.id, "duplicate image id")
        images_by_id[img.id] = img
        if img.width <= 0 or img.height <= 0:
            report.add("image", img.id, f"non-positive size {img.width}x{img.height}")
        if not img.file_name:
            report.add("image", img.id, "empty file_name")

    seen_ann: set[int] = set()
    grouped: dict[int, set[int]] = {img.id: set() for img in index.images}
    for ann in index.annotations:
        if ann.id in seen_ann:
            report.add("annotation", ann.id, "duplicate annotation id")
        seen_ann.add(ann.id)
        img = images_by_id.get(ann.image_id)
        if img is None:
            report.add("annotation", ann.id, f"dangling image_id {ann.image_id}")
        else:
            grouped[ann.image_id].add(ann.id)
        if ann.category_id not in index.categories:
            report.add("annotation", ann.id, f"dangling category_id {ann.category_id}")
        _validate_geometry(ann, img, report)

    for image_id, ids in index.by_image.items():
        expected = grouped.get(image_id, set())
        if set(ids) != expected:
            report.add("index", image_id, "by_image entry inconsistent with annotations")
    for image_id in grouped:
        if grouped[image_id] and image_id not in index.by_image:
            report.add("index", image_id, "image missing from by_image")
    return report


def _validate_geometry(
    ann: InstanceAnnotation, img: ImageRecord | None, report: ValidationReport
) -> None:
    if ann.has_rle():
        seg: dict = ann.segmentation  # type: ignore[assignment]
        size = seg.get("size")
        if img is not None and size != [img.height, img.width]:
            report.add("annotation", ann.id, f"rle size {size} does not match image")
    else:
        for poly in ann.polygons():
            if not isinstance(poly, list) or len(poly) < 6 or len(poly) % 2 != 0:
                report.add("annotation", ann.id, "degenerate polygon (< 3 vertices)")
                break
    x, y, w, h = ann.bbox
    if w <= 0 or h <= 0:
        report.add("annotation", ann.id, f"non-positive bbox size ({w}, {h})")
    elif img is not None:
        if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
            report.add("annotation", ann.id, "bbox extends outside image bounds")
    if ann.area <= 0:
        report.add("annotation", ann.id, f"non-positive area {ann.area}")
    if ann.iscrowd not in (0, 1):
        report.add("annotation", ann.id, f"iscrowd must be 0 or 1, got {ann.iscrowd}")
