"""Dataloader-side binding for the instaboost augmentation pipeline.

Exposes exactly ``augment_one`` and ``version``.  The pipeline is reached
through its command-line interface rather than by importing its internals:
inputs are staged in a scratch directory as a PNG plus an annotation
document, ``instaboost preview`` does the work in a child process, and its
outputs are read back into fresh buffers.  Nothing the caller passes in is
ever written to; image bytes cross the boundary by copy in both directions.

Annotation records use the same field names as the COCO document
(``category_id``, ``segmentation``, ``bbox``, ``area``, optional ``id`` and
``iscrowd``).  Config is a flat key-value map handed to the pipeline
verbatim; all config validation happens on the pipeline side, so a bad key
surfaces here as ``ValueError`` naming that key.  Pipeline failures surface
as ``RuntimeError`` carrying the pipeline's error name and message.
"""

from __future__ import annotations

import functools
import json
import os
import re
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

__all__ = ["BoundImage", "augment_one", "version"]

_REQUIRED_ANN_FIELDS = ("category_id", "segmentation", "bbox", "area")

_MOVED_LINE = re.compile(
    r"^instance (\d+): moved t=\((-?[\d.]+),(-?[\d.]+)\)"
    r" s=(-?[\d.]+) r=(-?[\d.]+) -> annotation (\d+)$"
)
_KEPT_LINE = re.compile(r"^instance (\d+): kept \((.+)\)$")


@dataclass(frozen=True)
class BoundImage:
    """Raw 8-bit RGB frame: row-major rows, interleaved channels.

    ``pixels`` holds exactly ``height * width * channels`` bytes and is an
    immutable copy of whatever buffer it was built from.
    """

    height: int
    width: int
    channels: int = 3
    pixels: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        if self.channels != 3:
            raise ValueError(f"channels must be 3, got {self.channels}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"bad frame shape {self.height}x{self.width}")
        if isinstance(self.pixels, int):
            # bytes(n) would silently allocate n zero bytes
            raise ValueError("pixels must be a bytes-like buffer")
        try:
            raw = bytes(self.pixels)
        except TypeError:
            raise ValueError("pixels must be a bytes-like buffer") from None
        expected = self.height * self.width * self.channels
        if len(raw) != expected:
            raise ValueError(
                f"pixel buffer holds {len(raw)} bytes, "
                f"expected {expected} for {self.height}x{self.width}x3"
            )
        object.__setattr__(self, "pixels", raw)

    @classmethod
    def from_array(cls, array) -> "BoundImage":
        arr = np.ascontiguousarray(array, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an HxWx3 array, got shape {arr.shape}")
        h, w = arr.shape[:2]
        return cls(height=h, width=w, channels=3, pixels=arr.tobytes())

    def to_array(self) -> np.ndarray:
        flat = np.frombuffer(self.pixels, dtype=np.uint8)
        return flat.reshape(self.height, self.width, self.channels).copy()


def _cli(argv: list[str]) -> subprocess.CompletedProcess:
    cmd = [sys.executable, "-m", "instaboost.cli", *argv]
    return subprocess.run(cmd, capture_output=True, text=True)


def _strip_label(text: str) -> str:
    # stderr lines are "usage error: ..." or "error: Name: message"
    msg = text.strip()
    for label in ("usage error: ", "error: "):
        if msg.startswith(label):
            return msg[len(label):]
    return msg


def _check_annotations(annotations) -> list[dict]:
    if not isinstance(annotations, (list, tuple)):
        raise ValueError("annotations must be a list of records")
    for i, rec in enumerate(annotations):
        if not isinstance(rec, dict):
            raise ValueError(f"annotation record {i} is not a mapping")
        for key in _REQUIRED_ANN_FIELDS:
            if key not in rec:
                raise ValueError(f"annotation record {i} is missing field '{key}'")
    return [dict(rec) for rec in annotations]


def _build_document(image: BoundImage, records: list[dict]) -> dict:
    # caller ids are kept only when every record carries one
    if records and all("id" in rec for rec in records):
        ids = [int(rec["id"]) for rec in records]
    else:
        ids = list(range(1, len(records) + 1))
    anns = []
    for rec, ann_id in zip(records, ids):
        out = dict(rec)
        out["id"] = ann_id
        out["image_id"] = 1
        out.setdefault("iscrowd", 0)
        anns.append(out)
    cat_ids = sorted({int(rec["category_id"]) for rec in records})
    return {
        "images": [
            {
                "id": 1,
                "file_name": "input.png",
                "width": image.width,
                "height": image.height,
            }
        ],
        "annotations": anns,
        "categories": [{"id": c, "name": f"category {c}"} for c in cat_ids],
    }


def _parse_provenance(stdout: str) -> dict:
    applied = False
    instances = []
    for line in stdout.splitlines():
        line = line.strip()
        if line.startswith("applied: "):
            applied = line == "applied: true"
            continue
        m = _MOVED_LINE.match(line)
        if m:
            instances.append(
                {
                    "id": int(m.group(1)),
                    "moved": True,
                    "translation": (float(m.group(2)), float(m.group(3))),
                    "scale": float(m.group(4)),
                    "rotation": float(m.group(5)),
                    "new_id": int(m.group(6)),
                }
            )
            continue
        m = _KEPT_LINE.match(line)
        if m:
            instances.append(
                {"id": int(m.group(1)), "moved": False, "failure": m.group(2)}
            )
    return {"applied": applied, "instances": instances}


def augment_one(image, annotations, config, seed):
    """Run one frame through the augmentation pipeline.

    ``image`` is a BoundImage, ``annotations`` a list of COCO-style records,
    ``config`` a flat key-value map of pipeline settings (dotted keys reach
    nested sections), ``seed`` the RNG seed.  An explicit ``seed`` argument
    wins over any seed inside ``config``.

    Returns ``(image, annotations, provenance)`` where the image is a fresh
    BoundImage, the records are fresh dicts (``image_id`` dropped), and
    provenance is ``{"applied": bool, "instances": [...]}`` with one entry
    per instance the pipeline touched.  Numeric placement values in the
    provenance carry the preview command's printed precision.

    Raises ValueError for malformed arguments or config, RuntimeError when
    the pipeline itself fails.
    """
    if not isinstance(image, BoundImage):
        raise ValueError("image must be a BoundImage")
    if not isinstance(config, dict):
        raise ValueError("config must be a flat key-value mapping")
    records = _check_annotations(annotations)

    with tempfile.TemporaryDirectory(prefix="instaboost-bind-") as tmp:
        png_in = os.path.join(tmp, "input.png")
        Image.frombytes(
            "RGB", (image.width, image.height), image.pixels
        ).save(png_in, format="PNG")

        ann_in = os.path.join(tmp, "anns.json")
        with open(ann_in, "w", encoding="utf-8") as fh:
            json.dump(_build_document(image, records), fh)

        cfg_path = os.path.join(tmp, "config.json")
        with open(cfg_path, "w", encoding="utf-8") as fh:
            json.dump(config, fh)

        png_out = os.path.join(tmp, "out.png")
        ann_out = os.path.join(tmp, "out-anns.json")
        proc = _cli(
            [
                "preview",
                "--ann", ann_in,
                "--images", tmp,
                "--image-id", "1",
                "--out-image", png_out,
                "--out-ann", ann_out,
                "--config", cfg_path,
                "--seed", str(int(seed)),
            ]
        )
        if proc.returncode == 2:
            raise ValueError(_strip_label(proc.stderr))
        if proc.returncode != 0:
            raise RuntimeError(_strip_label(proc.stderr) or f"pipeline exited {proc.returncode}")

        with Image.open(png_out) as im:
            out_arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        with open(ann_out, encoding="utf-8") as fh:
            out_doc = json.load(fh)

    out_records = []
    for rec in out_doc["annotations"]:
        rec = dict(rec)
        rec.pop("image_id", None)
        out_records.append(rec)
    out_image = BoundImage.from_array(out_arr)
    return out_image, out_records, _parse_provenance(proc.stdout)


@functools.lru_cache(maxsize=1)
def version() -> str:
    """Pipeline version string, MAJOR.MINOR.PATCH."""
    proc = _cli(["--version"])
    if proc.returncode != 0:
        raise RuntimeError(_strip_label(proc.stderr) or "cannot query pipeline version")
    return proc.stdout.strip()
