"""Affine placement: tuples, jitter sampling, patch warping, annotation sync.

A placement is the 4-tuple (t_x, t_y, s, r). Its matrix form is

    [[ s*cos r,  s*sin r,  t_x],
     [-s*sin r,  s*cos r,  t_y],
     [    0,         0,      1]]

with r in degrees (converted to radians internally). Rotation and scale
pivot on the instance centroid so (t_x, t_y) reads directly as a center
shift; with image y pointing down, positive r turns the patch clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rle as rle_codec
from .annotations import InstanceAnnotation
from .errors import EmptyResult, FullyClipped
from .maskops import AlphaInstancePatch, mask_to_bbox

# partially clipped paste survives only with at least this many visible pixels
MIN_VISIBLE_ALPHA_PIXELS = 20

DEFAULT_ALPHA_THRESHOLD = 0.5


@dataclass(frozen=True)
class AffineTuple:
    t_x: float
    t_y: float
    s: float
    r: float  # degrees

    def __post_init__(self) -> None:
        values = (self.t_x, self.t_y, self.s, self.r)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"affine tuple has non-finite components: {values}")
        if self.s <= 0:
            raise ValueError(f"scale must be positive, got {self.s}")


IDENTITY = AffineTuple(0.0, 0.0, 1.0, 0.0)


@dataclass(frozen=True)
class JitterConfig:
    """Uniform neighborhoods around the identity placement."""

    translation_ratio: float = 1.0 / 15.0  # of object width (t_x) / height (t_y)
    scale_range: tuple[float, float] = (0.8, 1.2)
    rotation_range_deg: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self) -> None:
        if self.translation_ratio < 0:
            raise ValueError("translation_ratio must be >= 0")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValueError(f"scale_range must be a positive interval, got {self.scale_range}")
        rlo, rhi = self.rotation_range_deg
        if rlo > rhi:
            raise ValueError(f"rotation range is empty: {self.rotation_range_deg}")


def affine_matrix(t: AffineTuple) -> np.ndarray:
    rad = math.radians(t.r)
    c, s = math.cos(rad), math.sin(rad)
    return np.array(
        [
            [t.s * c, t.s * s, t.t_x],
            [-t.s * s, t.s * c, t.t_y],
            [0.0, 0.0, 1.0],
        ]
    )


def sample_jitter(
    rng: np.random.Generator, obj_w: float, obj_h: float, cfg: JitterConfig
) -> AffineTuple:
    """Draw one placement tuple; four independent uniforms, fixed draw order."""
    if obj_w <= 0 or obj_h <= 0:
        raise ValueError("object dimensions must be positive")
    tx_half = obj_w * cfg.translation_ratio
    ty_half = obj_h * cfg.translation_ratio
    t_x = rng.uniform(-tx_half, tx_half)
    t_y = rng.uniform(-ty_half, ty_half)
    s = rng.uniform(*cfg.scale_range)
    r = rng.uniform(*cfg.rotation_range_deg)
    return AffineTuple(t_x, t_y, s, r)


def warp_patch(
    patch: AlphaInstancePatch, t: AffineTuple, canvas_w: int, canvas_h: int
) -> AlphaInstancePatch:
    """Resample the patch under the placement, clipped to the canvas.

    Rotation and scale act about ``patch.center``; the translation then
    shifts the result. Color is sampled bilinearly with edge clamping (the
    crop carries real image context), alpha with zero padding.
    """
    ox, oy = patch.origin
    h, w = patch.rgba.shape[:2]
    cx, cy = patch.center

    rad = math.radians(t.r)
    cos_r, sin_r = math.cos(rad), math.sin(rad)

    # forward-map crop corners to bound the output rectangle
    corners = np.array(
        [[ox, oy], [ox + w, oy], [ox, oy + h], [ox + w, oy + h]], dtype=float
    )
    rel = corners - (cx, cy)
    fwd_x = t.s * cos_r * rel[:, 0] + t.s * sin_r * rel[:, 1] + cx + t.t_x
    fwd_y = -t.s * sin_r * rel[:, 0] + t.s * cos_r * rel[:, 1] + cy + t.t_y
    nx0 = max(0, int(math.floor(fwd_x.min())) - 1)
    ny0 = max(0, int(math.floor(fwd_y.min())) - 1)
    nx1 = min(canvas_w, int(math.ceil(fwd_x.max())) + 1)
    ny1 = min(canvas_h, int(math.ceil(fwd_y.max())) + 1)
    if nx1 <= nx0 or ny1 <= ny0:
        raise FullyClipped("transformed patch lies outside the canvas")

    gx, gy = np.meshgrid(np.arange(nx0, nx1, dtype=float), np.arange(ny0, ny1, dtype=float))
    # inverse map: undo translation, then the rotation-scale block about the center
    qx = gx - cx - t.t_x
    qy = gy - cy - t.t_y
    inv = 1.0 / t.s
    px = inv * (cos_r * qx - sin_r * qy) + cx - ox
    py = inv * (sin_r * qx + cos_r * qy) + cy - oy

    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    fx = px - x0
    fy = py - y0
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy

    def clamp_x(ix):
        return np.clip(ix, 0, w - 1)

    def clamp_y(iy):
        return np.clip(iy, 0, h - 1)

    rgb = patch.rgba[:, :, :3]
    alpha = patch.rgba[:, :, 3]
    out = np.zeros((ny1 - ny0, nx1 - nx0, 4), dtype=np.float64)
    for wgt, ix, iy in (
        (w00, x0, y0),
        (w10, x0 + 1, y0),
        (w01, x0, y0 + 1),
        (w11, x0 + 1, y0 + 1),
    ):
        cxi, cyi = clamp_x(ix), clamp_y(iy)
        out[:, :, :3] += wgt[:, :, None] * rgb[cyi, cxi]
        inb = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        out[:, :, 3] += wgt * np.where(inb, alpha[cyi, cxi], 0.0)

    if not (out[:, :, 3] > 0).any():
        raise FullyClipped("transformed patch has no visible alpha inside the canvas")
    return AlphaInstancePatch(
        rgba=out.astype(np.float32),
        origin=(nx0, ny0),
        center=(cx + t.t_x, cy + t.t_y),
        source_annotation_id=patch.source_annotation_id,
    )


def transform_annotation(
    ann: InstanceAnnotation,
    warped: AlphaInstancePatch,
    width: int,
    height: int,
    new_id: int,
    alpha_threshold: float = DEFAULT_ALPHA_THRESHOLD,
) -> InstanceAnnotation:
    """Regenerate mask/bbox/area from the warped alpha plane.

    Pixels strictly above the threshold form the new mask (RLE-encoded);
    ties are excluded, symmetric with the feather midpoint.
    """
    full = np.zeros((height, width), dtype=bool)
    ox, oy = warped.origin
    ph, pw = warped.rgba.shape[:2]
    full[oy:oy + ph, ox:ox + pw] = warped.alpha > alpha_threshold
    if not full.any():
        raise EmptyResult("no warped alpha above the threshold")
    bbox = mask_to_bbox(full)
    area = int(full.sum())
    return InstanceAnnotation(
        id=int(new_id),
        image_id=ann.image_id,
        category_id=ann.category_id,
        segmentation=rle_codec.encode(full),
        bbox=tuple(float(v) for v in bbox),
        area=float(area),
        iscrowd=0,
        extra=dict(ann.extra),
    )
