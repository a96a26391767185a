"""Mask geometry: rasterization, bounding boxes, contour rings, feathering.

Coordinate conventions used throughout the toolkit:
  - pixel (row i, col j) covers the unit cell [j, j+1) x [i, i+1); polygon
    vertices live in that continuous space, and rasterization tests the
    pixel center (j+0.5, i+0.5) with the even-odd rule;
  - array indices double as integer coordinates (x = col, y = row) for
    warping, centroids, and heatmap shifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import rle as rle_codec
from .annotations import InstanceAnnotation
from .errors import DegenerateGeometry, EmptyMask

DEFAULT_RING_WIDTHS = (5, 5, 5)
DEFAULT_RING_WEIGHTS = (0.4, 0.35, 0.25)
DEFAULT_FEATHER_RADIUS = 3


@dataclass(frozen=True)
class ContourRingSet:
    """Three disjoint background bands hugging the instance boundary.

    Ring 1 is innermost (adjacent to the mask); bands are measured in
    Chebyshev distance, so ring i covers distances in
    (sum(widths[:i-1]), sum(widths[:i])].
    """

    rings: tuple[np.ndarray, np.ndarray, np.ndarray]
    widths: tuple[int, int, int]
    weights: tuple[float, float, float]

    def pixel_coords(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per ring, (ys, xs) arrays of member pixels."""
        return [tuple(np.nonzero(r)) for r in self.rings]  # type: ignore[misc]


@dataclass
class AlphaInstancePatch:
    """Cropped instance with a feathered alpha channel.

    ``rgba`` is float32 (h, w, 4): RGB on the 0-255 scale, alpha in [0, 1].
    ``origin`` is the crop's top-left (x, y) in source-image pixels and
    ``center`` the source-space centroid of the binary mask.
    """

    rgba: np.ndarray
    origin: tuple[int, int]
    center: tuple[float, float]
    source_annotation_id: int

    @property
    def alpha(self) -> np.ndarray:
        return self.rgba[:, :, 3]


def rasterize(ann: InstanceAnnotation, width: int, height: int) -> np.ndarray:
    """Pixel support of an annotation as a boolean (height, width) mask."""
    if ann.has_rle():
        seg: dict = ann.segmentation  # type: ignore[assignment]
        if list(seg["size"]) != [height, width]:
            raise DegenerateGeometry(
                f"annotation {ann.id}: RLE size {seg['size']} does not match "
                f"({height}, {width})"
            )
        mask = rle_codec.decode(seg)
        if not mask.any():
            raise DegenerateGeometry(f"annotation {ann.id}: empty RLE mask")
        return mask

    mask = np.zeros((height, width), dtype=bool)
    polys = ann.polygons()
    if not polys:
        raise DegenerateGeometry(f"annotation {ann.id}: no polygons")
    for poly in polys:
        if len(poly) < 6 or len(poly) % 2 != 0:
            raise DegenerateGeometry(
                f"annotation {ann.id}: polygon with {len(poly) // 2} vertices"
            )
        _fill_polygon(np.asarray(poly, dtype=float), mask)
    if not mask.any():
        raise DegenerateGeometry(f"annotation {ann.id}: polygon encloses no pixels")
    return mask


def _fill_polygon(flat: np.ndarray, out: np.ndarray) -> None:
    """Even-odd scanline fill at pixel centers, OR-ed into ``out``."""
    height, width = out.shape
    xs, ys = flat[0::2], flat[1::2]
    x2, y2 = np.roll(xs, -1), np.roll(ys, -1)
    row_lo = max(0, int(math.floor(ys.min() - 0.5)))
    row_hi = min(height, int(math.ceil(ys.max() + 0.5)))
    for row in range(row_lo, row_hi):
        yc = row + 0.5
        # half-open rule: an edge covers scanlines in [min(y), max(y))
        cross = (np.minimum(ys, y2) <= yc) & (yc < np.maximum(ys, y2))
        if not cross.any():
            continue
        t = (yc - ys[cross]) / (y2[cross] - ys[cross])
        xi = np.sort(xs[cross] + t * (x2[cross] - xs[cross]))
        for k in range(0, len(xi) - 1, 2):
            j0 = max(0, int(math.ceil(xi[k] - 0.5)))
            j1 = min(width, int(math.ceil(xi[k + 1] - 0.5)))
            if j1 > j0:
                out[row, j0:j1] = True


def mask_to_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Tightest (x, y, w, h) box around the foreground."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyMask("cannot compute bbox of an empty mask")
    return (
        int(cols[0]),
        int(rows[0]),
        int(cols[-1] - cols[0] + 1),
        int(rows[-1] - rows[0] + 1),
    )


def mask_centroid(mask: np.ndarray) -> tuple[float, float]:
    """(cx, cy) mean of foreground pixel coordinates."""
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise EmptyMask("cannot compute centroid of an empty mask")
    return float(cols.mean()), float(rows.mean())


def contour_rings(
    mask: np.ndarray,
    widths: tuple[int, int, int] = DEFAULT_RING_WIDTHS,
    weights: tuple[float, float, float] = DEFAULT_RING_WEIGHTS,
) -> ContourRingSet:
    """Chebyshev-distance bands around the mask, clipped to the frame."""
    if not mask.any():
        raise EmptyMask("contour rings need a nonempty mask")
    if len(widths) != 3 or any(w <= 0 for w in widths):
        raise ValueError(f"ring widths must be 3 positive values, got {widths}")
    if len(weights) != 3 or not (weights[0] > weights[1] > weights[2] > 0):
        raise ValueError(f"ring weights must be strictly decreasing positive, got {weights}")
    if mask.all():
        # no background: every ring is empty but still well-formed
        empty = np.zeros_like(mask)
        return ContourRingSet(
            (empty, empty.copy(), empty.copy()),
            tuple(int(w) for w in widths),  # type: ignore[arg-type]
            tuple(float(w) for w in weights),  # type: ignore[arg-type]
        )
    dist = ndimage.distance_transform_cdt(~mask, metric="chessboard")
    bounds = np.cumsum([0, *widths])
    rings = tuple(
        (dist > bounds[i]) & (dist <= bounds[i + 1]) for i in range(3)
    )
    return ContourRingSet(
        rings,  # type: ignore[arg-type]
        tuple(int(w) for w in widths),  # type: ignore[arg-type]
        tuple(float(w) for w in weights),  # type: ignore[arg-type]
    )


def feather_alpha(mask: np.ndarray, feather_radius: float) -> np.ndarray:
    """Smooth opacity ramp across the mask boundary.

    alpha(p) = clamp(0.5 + sd(p) / (2 * feather_radius), 0, 1) where sd is
    the signed Euclidean distance to the boundary (positive inside, treating
    the boundary as lying between pixel centers). Radius 0 returns the hard
    mask.
    """
    if not mask.any():
        raise EmptyMask("feathering needs a nonempty mask")
    if feather_radius < 0:
        raise ValueError("feather_radius must be >= 0")
    if feather_radius == 0:
        return mask.astype(np.float32)
    if mask.all():
        return np.ones(mask.shape, dtype=np.float32)
    inside = ndimage.distance_transform_edt(mask)
    outside = ndimage.distance_transform_edt(~mask)
    sd = np.where(mask, inside - 0.5, -(outside - 0.5))
    alpha = 0.5 + sd / (2.0 * feather_radius)
    return np.clip(alpha, 0.0, 1.0).astype(np.float32)


def cut_instance(
    image: np.ndarray, ann: InstanceAnnotation, feather_radius: float = DEFAULT_FEATHER_RADIUS
) -> tuple[AlphaInstancePatch, np.ndarray]:
    """Cut one annotated instance out of its image.

    Returns the feathered patch and the hole mask (every source pixel with
    alpha > 0, i.e. what an inpainter must fill before re-pasting).
    """
    height, width = image.shape[:2]
    mask = rasterize(ann, width, height)
    return cut_from_mask(image, mask, feather_radius, ann.id)


def cut_from_mask(
    image: np.ndarray, mask: np.ndarray, feather_radius: float, annotation_id: int
) -> tuple[AlphaInstancePatch, np.ndarray]:
    """cut_instance for a pre-rasterized mask (saves double rasterization)."""
    height, width = image.shape[:2]
    if mask.shape != (height, width):
        raise ValueError("mask dimensions do not match the image")
    alpha = feather_alpha(mask, feather_radius)
    hole = alpha > 0.0
    x, y, w, h = mask_to_bbox(hole)
    pad = 2  # bilinear sampling context around the feather band
    x0 = max(0, x - pad)
    y0 = max(0, y - pad)
    x1 = min(width, x + w + pad)
    y1 = min(height, y + h + pad)
    rgba = np.empty((y1 - y0, x1 - x0, 4), dtype=np.float32)
    rgba[:, :, :3] = image[y0:y1, x0:x1].astype(np.float32)
    rgba[:, :, 3] = alpha[y0:y1, x0:x1]
    patch = AlphaInstancePatch(
        rgba=rgba,
        origin=(x0, y0),
        center=mask_centroid(mask),
        source_annotation_id=annotation_id,
    )
    return patch, hole
