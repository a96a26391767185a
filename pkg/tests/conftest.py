"""Shared fixture builders: synthetic images, polygons, dataset trees."""

from __future__ import annotations

import json
import math
import os

import cv2
import numpy as np
from PIL import Image


def textured_image(width: int, height: int, seed: int, coarse: int = 8) -> np.ndarray:
    """Smooth seeded noise, upsampled so it has local structure."""
    rng = np.random.default_rng(seed)
    grid = rng.random((max(2, height // coarse), max(2, width // coarse), 3))
    tex = cv2.resize(grid, (width, height), interpolation=cv2.INTER_CUBIC)
    return np.clip(30 + tex * 195, 0, 255).astype(np.uint8)


def striped_image(width: int, height: int, period: int = 8, axis: str = "x") -> np.ndarray:
    """Vertical (axis x) or horizontal square-wave stripes of the period."""
    img = np.zeros((height, width, 3), dtype=np.uint8)
    coord = np.arange(width) if axis == "x" else np.arange(height)
    on = (coord % period) < period // 2
    line = np.where(on[:, None], np.uint8(220), np.uint8(40))
    if axis == "x":
        img[:] = line[None, :, :]
    else:
        img[:] = line[:, None, :]
    return img


def rect_poly(x0: float, y0: float, w: float, h: float) -> list[float]:
    return [x0, y0, x0 + w, y0, x0 + w, y0 + h, x0, y0 + h]


def blob_poly(cx: float, cy: float, radius: float, seed: int = 0, n: int = 12) -> list[float]:
    """Star-convex wobbly polygon around (cx, cy)."""
    rng = np.random.default_rng(seed)
    pts: list[float] = []
    for k in range(n):
        ang = 2.0 * math.pi * k / n
        r = radius * (0.6 + 0.4 * rng.random())
        pts += [cx + r * math.cos(ang), cy + r * math.sin(ang)]
    return pts


def poly_bbox(poly: list[float]) -> tuple[float, float, float, float]:
    xs = poly[0::2]
    ys = poly[1::2]
    return (min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))


def shoelace_area(poly: list[float]) -> float:
    xs = poly[0::2]
    ys = poly[1::2]
    n = len(xs)
    acc = 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += xs[i] * ys[j] - xs[j] * ys[i]
    return abs(acc) / 2.0


def ann_entry(ann_id: int, image_id: int, poly: list[float], category_id: int = 1, **extra):
    rec = {
        "id": ann_id,
        "image_id": image_id,
        "category_id": category_id,
        "segmentation": [poly],
        "bbox": list(poly_bbox(poly)),
        "area": shoelace_area(poly),
        "iscrowd": 0,
    }
    rec.update(extra)
    return rec


def coco_doc(images: list[dict], annotations: list[dict], categories=None) -> dict:
    if categories is None:
        categories = [{"id": 1, "name": "thing"}]
    return {"images": images, "annotations": annotations, "categories": categories}


def write_dataset(
    root,
    n_images: int,
    width: int = 160,
    height: int = 120,
    seed: int = 0,
    instances_per_image: int = 2,
) -> tuple[str, str]:
    """Materialize a synthetic dataset tree; returns (ann_path, image_dir)."""
    img_dir = os.path.join(str(root), "images")
    os.makedirs(img_dir, exist_ok=True)
    images, annotations = [], []
    ann_id = 1
    rng = np.random.default_rng(seed)
    for i in range(1, n_images + 1):
        arr = textured_image(width, height, seed=seed * 1000 + i)
        name = f"img_{i:04d}.png"
        Image.fromarray(arr).save(os.path.join(img_dir, name))
        images.append({"id": i, "file_name": name, "width": width, "height": height})
        for k in range(instances_per_image):
            radius = float(rng.uniform(0.08, 0.16)) * min(width, height)
            cx = float(rng.uniform(0.25, 0.75)) * width
            cy = float(rng.uniform(0.25, 0.75)) * height
            poly = blob_poly(cx, cy, radius, seed=seed * 7919 + ann_id)
            annotations.append(ann_entry(ann_id, i, poly))
            ann_id += 1
    ann_path = os.path.join(str(root), "annotations.json")
    with open(ann_path, "w", encoding="utf-8") as fh:
        json.dump(coco_doc(images, annotations), fh)
    return ann_path, img_dir
