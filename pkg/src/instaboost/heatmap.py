"""Appearance-consistency heatmap: where does a cut instance still blend in?

The score for a candidate center is a weighted sum, over three contour
rings around the instance, of the mean per-pixel RGB distance between
each ring pixel and its translated partner. Candidates whose rings fall
mostly off-image (or over the instance itself) score infinite. Finite
scores are min-max normalized and passed through -log so that low color
drift maps to high heat.

All grid math runs at a reduced working resolution; the result is
bilinearly upsampled to source size before being normalized into a
sampling distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DegenerateDistribution, EmptyMask
from .maskops import (
    DEFAULT_RING_WEIGHTS,
    DEFAULT_RING_WIDTHS,
    ContourRingSet,
    contour_rings,
    mask_centroid,
)

DEFAULT_WORKING_SIZE = (180, 120)  # (width, height)
DEFAULT_EPSILON_LOG = 1e-6

# candidate-chunk size targets ~2.5M ring-pixel pairs resident at once
_PAIR_BUDGET = 2_500_000


@dataclass(frozen=True)
class HeatmapConfig:
    ring_widths: tuple[int, int, int] = DEFAULT_RING_WIDTHS
    ring_weights: tuple[float, float, float] = DEFAULT_RING_WEIGHTS
    working_size: tuple[int, int] = DEFAULT_WORKING_SIZE  # (width, height)
    epsilon_log: float = DEFAULT_EPSILON_LOG
    stride: int = 1

    def __post_init__(self) -> None:
        ww, wh = self.working_size
        if ww < 1 or wh < 1:
            raise ValueError(f"working_size must be positive, got {self.working_size}")
        if not (0 < self.epsilon_log < 1):
            raise ValueError(f"epsilon_log must lie in (0, 1), got {self.epsilon_log}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass
class ConsistencyHeatmap:
    width: int  # source image size
    height: int
    distance: np.ndarray  # (gh, gw) raw distances on the candidate grid, +inf allowed
    value: np.ndarray  # (gh, gw) -log rescaled, 0 where distance is +inf
    upsampled: np.ndarray  # (height, width) value bilinearly lifted to source size
    computed_at: tuple[int, int]  # (width, height) actually used for the grid
    stride: int
    origin_cell: tuple[int, int]  # instance centroid cell on the working grid
    degenerate: bool = False  # all finite distances equal
    all_infinite: bool = False


@dataclass
class ProbabilityMap:
    p: np.ndarray  # (height, width), sums to 1

    @property
    def height(self) -> int:
        return self.p.shape[0]

    @property
    def width(self) -> int:
        return self.p.shape[1]


def _grid_sweep(
    img64: np.ndarray,
    mask: np.ndarray,
    ring_coords: list[tuple[np.ndarray, np.ndarray]],
    weights: tuple[float, float, float],
    origin: tuple[int, int],
    stride: int,
) -> np.ndarray:
    """Distances for every stride-grid candidate at once.

    Iterates over ring pixels, not candidates: for one ring pixel, the
    partners of all candidates form a shifted window of the image, so a
    slice of a padded copy covers the whole grid in one vector op.
    """
    hgt, wid = mask.shape
    x0, y0 = origin
    gh = len(range(0, hgt, stride))
    gw = len(range(0, wid, stride))
    pad_img = np.pad(img64, ((hgt, hgt), (wid, wid), (0, 0)))
    pad_valid = np.pad(~mask, ((hgt, hgt), (wid, wid)))

    acc = np.zeros((gh, gw))
    finite = np.ones((gh, gw), dtype=bool)
    for (ys, xs), weight in zip(ring_coords, weights):
        ring_sum = np.zeros((gh, gw))
        ring_cnt = np.zeros((gh, gw), dtype=np.int32)
        for y, x in zip(ys.tolist(), xs.tolist()):
            r0 = y - y0 + hgt
            c0 = x - x0 + wid
            win = pad_img[r0:r0 + hgt:stride, c0:c0 + wid:stride]
            val = pad_valid[r0:r0 + hgt:stride, c0:c0 + wid:stride]
            diff = win - img64[y, x]
            dist = np.sqrt(np.einsum("hwc,hwc->hw", diff, diff))
            ring_sum += dist * val
            ring_cnt += val
        n_ring = len(xs)
        excluded_frac = 1.0 - ring_cnt / n_ring
        finite &= (excluded_frac <= 0.5) & (ring_cnt > 0)
        acc += weight * (ring_sum / np.maximum(ring_cnt, 1))
    return np.where(finite, acc, np.inf)


def _candidate_eval(
    img64: np.ndarray,
    mask: np.ndarray,
    ring_coords: list[tuple[np.ndarray, np.ndarray]],
    weights: tuple[float, float, float],
    origin: tuple[int, int],
    candidates: np.ndarray,
) -> np.ndarray:
    """Distances for an explicit (x, y) candidate list."""
    hgt, wid = mask.shape
    flat = img64.reshape(-1, 3)
    mask_flat = mask.reshape(-1)
    x0, y0 = origin
    cand_dx = candidates[:, 0].astype(np.int64) - x0
    cand_dy = candidates[:, 1].astype(np.int64) - y0
    n_cand = len(candidates)

    acc = np.zeros(n_cand)
    finite = np.ones(n_cand, dtype=bool)
    for (ys, xs), weight in zip(ring_coords, weights):
        n_ring = len(xs)
        ring_cols = flat[ys * wid + xs]  # (P, 3)
        chunk = max(64, _PAIR_BUDGET // n_ring)
        for c0 in range(0, n_cand, chunk):
            c1 = min(n_cand, c0 + chunk)
            qx = xs[None, :] + cand_dx[c0:c1, None]
            qy = ys[None, :] + cand_dy[c0:c1, None]
            inb = (qx >= 0) & (qx < wid) & (qy >= 0) & (qy < hgt)
            lin = np.clip(qy, 0, hgt - 1) * wid + np.clip(qx, 0, wid - 1)
            valid = inb & ~mask_flat[lin]
            diff = flat[lin] - ring_cols[None, :, :]
            dist = np.sqrt(np.einsum("kpc,kpc->kp", diff, diff))
            dist *= valid
            kept = valid.sum(axis=1)
            excluded_frac = 1.0 - kept / n_ring
            finite[c0:c1] &= (excluded_frac <= 0.5) & (kept > 0)
            acc[c0:c1] += weight * (dist.sum(axis=1) / np.maximum(kept, 1))
    return np.where(finite, acc, np.inf)


def _distance_grid(
    image: np.ndarray,
    mask: np.ndarray,
    rings: ContourRingSet,
    origin: tuple[int, int],
    stride: int,
    candidates: np.ndarray | None = None,
) -> np.ndarray:
    """Appearance distance per candidate center, in float64 throughout.

    Without ``candidates`` the full stride grid is scored and a 2-D grid
    returned; with it, the given (x, y) rows are scored into a 1-D array.
    Partner pixels landing off-image or on the instance are dropped; a
    ring keeping under half its pixels makes the score +inf.
    """
    hgt, wid = mask.shape
    ring_coords = rings.pixel_coords()
    if candidates is None:
        out_shape: tuple[int, ...] = (
            len(range(0, hgt, stride)),
            len(range(0, wid, stride)),
        )
    else:
        out_shape = (len(candidates),)
    if any(len(xs) == 0 for _, xs in ring_coords):
        return np.full(out_shape, np.inf)

    img64 = np.ascontiguousarray(image, dtype=np.float64)
    if candidates is None:
        return _grid_sweep(img64, mask, ring_coords, rings.weights, origin, stride)
    return _candidate_eval(img64, mask, ring_coords, rings.weights, origin, candidates)


def appearance_distance(
    image: np.ndarray,
    mask: np.ndarray,
    rings: ContourRingSet,
    origin_center: tuple[float, float],
    candidate_center: tuple[float, float],
) -> float:
    """Score one candidate center at the resolution of ``image``."""
    ox, oy = int(round(origin_center[0])), int(round(origin_center[1]))
    cand = np.array([[int(round(candidate_center[0])), int(round(candidate_center[1]))]])
    val = _distance_grid(image, mask, rings, (ox, oy), 1, candidates=cand)
    return float(val[0])


def log_rescale(distances: np.ndarray, epsilon_log: float = DEFAULT_EPSILON_LOG) -> np.ndarray:
    """Min-max normalize finite distances and apply -log; +inf pixels get 0.

    When every finite distance is equal the ratio is undefined; those
    pixels all map to 1.0 (callers flag the map as degenerate).
    """
    finite = np.isfinite(distances)
    if not finite.any():
        raise ValueError("no finite distances to rescale")
    vals = np.zeros(distances.shape, dtype=np.float64)
    lo = distances[finite].min()
    hi = distances[finite].max()
    if hi == lo:
        vals[finite] = 1.0
        return vals
    ratio = (distances[finite] - lo) / (hi - lo)
    vals[finite] = -np.log(np.maximum(ratio, epsilon_log))
    return vals


def compute_heatmap(
    image: np.ndarray, instance_mask: np.ndarray, cfg: HeatmapConfig | None = None
) -> ConsistencyHeatmap:
    if cfg is None:
        cfg = HeatmapConfig()
    if image.shape[:2] != instance_mask.shape:
        raise ValueError("image and mask shapes disagree")
    if not instance_mask.any():
        raise EmptyMask("cannot score placements for an empty instance mask")

    src_h, src_w = instance_mask.shape
    work_w, work_h = cfg.working_size
    if src_w <= work_w and src_h <= work_h:
        # working size caps resolution; small sources are scored exactly
        img_w = np.ascontiguousarray(image, dtype=np.float32)
        mask_w = instance_mask.astype(bool)
        widths = cfg.ring_widths
    else:
        img_w = cv2.resize(
            image.astype(np.float32), (work_w, work_h), interpolation=cv2.INTER_AREA
        )
        mask_w = (
            cv2.resize(
                instance_mask.astype(np.uint8), (work_w, work_h), interpolation=cv2.INTER_NEAREST
            )
            > 0
        )
        sx = work_w / src_w
        sy = work_h / src_h
        if not mask_w.any():
            # tiny instance vanished under nearest resize; keep its centroid cell
            cx, cy = mask_centroid(instance_mask)
            mask_w[
                min(work_h - 1, max(0, int(round(cy * sy)))),
                min(work_w - 1, max(0, int(round(cx * sx)))),
            ] = True
        ring_scale = float(np.sqrt(sx * sy))
        widths = tuple(max(1, int(round(wd * ring_scale))) for wd in cfg.ring_widths)

    cx, cy = mask_centroid(mask_w)
    origin = (
        min(img_w.shape[1] - 1, max(0, int(round(cx)))),
        min(img_w.shape[0] - 1, max(0, int(round(cy)))),
    )
    rings = contour_rings(mask_w, widths, cfg.ring_weights)
    dist = _distance_grid(img_w, mask_w, rings, origin, cfg.stride)

    finite_any = np.isfinite(dist).any()
    if not finite_any:
        # nowhere to sample a ring comparison; fall back to staying in place
        value = np.zeros(dist.shape, dtype=np.float64)
        gy = min(value.shape[0] - 1, origin[1] // cfg.stride)
        gx = min(value.shape[1] - 1, origin[0] // cfg.stride)
        value[gy, gx] = 1.0
        degenerate = False
        all_infinite = True
    else:
        value = log_rescale(dist, cfg.epsilon_log)
        finite_vals = dist[np.isfinite(dist)]
        degenerate = bool(finite_vals.max() == finite_vals.min())
        all_infinite = False

    if value.shape == (src_h, src_w):
        upsampled = value.copy()
    else:
        upsampled = cv2.resize(
            value.astype(np.float32), (src_w, src_h), interpolation=cv2.INTER_LINEAR
        ).astype(np.float64)

    return ConsistencyHeatmap(
        width=src_w,
        height=src_h,
        distance=dist,
        value=value,
        upsampled=upsampled,
        computed_at=(img_w.shape[1], img_w.shape[0]),
        stride=cfg.stride,
        origin_cell=origin,
        degenerate=degenerate,
        all_infinite=all_infinite,
    )


def to_probability(
    hm: ConsistencyHeatmap, exclusion: np.ndarray | None = None
) -> ProbabilityMap:
    """Normalize the source-resolution heat into a center distribution."""
    grid = hm.upsampled.astype(np.float64, copy=True)
    np.maximum(grid, 0.0, out=grid)  # bilinear can leave -0.0 style dust
    if exclusion is not None:
        if exclusion.shape != grid.shape:
            raise ValueError("exclusion mask shape disagrees with the heatmap")
        grid[exclusion] = 0.0
    total = grid.sum()
    if not (total > 0):
        raise DegenerateDistribution("heatmap has no positive mass to sample from")
    return ProbabilityMap(p=grid / total)


def sample_center(rng: np.random.Generator, pm: ProbabilityMap) -> tuple[int, int]:
    """Draw one (x, y) center by inverse CDF over the flattened grid."""
    flat = pm.p.ravel()
    cdf = np.cumsum(flat)
    u = rng.random()
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, flat.size - 1)
    y, x = divmod(idx, pm.width)
    return int(x), int(y)
