"""Diffusion (harmonic) hole filling.

Hole pixels are driven to the discrete Laplace solution against the hole
boundary with Jacobi sweeps. Large holes are first solved at quarter scale
and upsampled, which bounds the sweep count; the postcondition (residual
under ``convergence_epsilon``) is judged at full resolution regardless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage

from .errors import EmptyMask, HoleCoversImage

_MULTIRES_MIN_EXTENT = 16  # hole bbox edge below this solves single-level


@dataclass
class InpaintConfig:
    max_iterations: int = 2000
    convergence_epsilon: float = 0.1  # max per-channel change per sweep, 0-255 scale
    boundary_band: int = 2  # known-pixel band used to seed the initial fill

    def __post_init__(self) -> None:
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if self.convergence_epsilon < 0:
            raise ValueError("convergence_epsilon must be >= 0")


@dataclass
class InpaintResult:
    image: np.ndarray
    converged: bool
    iterations: int
    final_change: float
    change_history: list[float] = field(default_factory=list)


def inpaint(image: np.ndarray, hole: np.ndarray, config: InpaintConfig | None = None) -> InpaintResult:
    """Fill ``hole`` pixels of an RGB uint8 image with diffused content."""
    config = config or InpaintConfig()
    if not hole.any():
        raise EmptyMask("inpainting needs a nonempty hole")
    if hole.all():
        raise HoleCoversImage("hole covers the whole image; no boundary data")
    height, width = hole.shape
    if image.shape[:2] != (height, width):
        raise ValueError("image and hole dimensions differ")

    out = np.array(image, dtype=np.uint8, copy=True)

    rows = np.flatnonzero(hole.any(axis=1))
    cols = np.flatnonzero(hole.any(axis=0))
    y0, y1 = max(0, rows[0] - 1), min(height, rows[-1] + 2)
    x0, x1 = max(0, cols[0] - 1), min(width, cols[-1] + 2)
    win = image[y0:y1, x0:x1].astype(np.float64)
    win_hole = hole[y0:y1, x0:x1]

    boundary = ndimage.binary_dilation(win_hole) & ~win_hole
    if not boundary.any():
        raise HoleCoversImage("hole has no adjacent known pixels")
    bmin = win[boundary].min(axis=0)
    bmax = win[boundary].max(axis=0)

    band = ndimage.binary_dilation(
        win_hole, structure=np.ones((3, 3), dtype=bool), iterations=max(1, config.boundary_band)
    ) & ~win_hole
    seed = win[band].mean(axis=0) if band.any() else win[~win_hole].mean(axis=0)
    win[win_hole] = np.clip(seed, bmin, bmax)

    hb = mask_bbox_extent(win_hole)
    if min(hb) >= _MULTIRES_MIN_EXTENT:
        _init_from_quarter_scale(win, win_hole, config)
        win[win_hole] = np.clip(win[win_hole], bmin, bmax)

    filled, converged, iterations, history = _jacobi(
        win, win_hole, config.convergence_epsilon, config.max_iterations
    )
    out[y0:y0 + win.shape[0], x0:x0 + win.shape[1]][win_hole] = np.clip(
        np.rint(filled[win_hole]), 0, 255
    ).astype(np.uint8)
    final = history[-1] if history else 0.0
    return InpaintResult(out, converged, iterations, final, history)


def mask_bbox_extent(mask: np.ndarray) -> tuple[int, int]:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1)


def _init_from_quarter_scale(win: np.ndarray, win_hole: np.ndarray, config: InpaintConfig) -> None:
    """Solve at 1/4 scale and write the upsampled fill into the hole."""
    h, w = win_hole.shape
    sw, sh = max(2, (w + 3) // 4), max(2, (h + 3) // 4)
    small = cv2.resize(win.astype(np.float32), (sw, sh), interpolation=cv2.INTER_AREA).astype(np.float64)
    small_hole = cv2.resize(win_hole.astype(np.float32), (sw, sh), interpolation=cv2.INTER_AREA) > 0.5
    if not small_hole.any() or small_hole.all():
        return
    filled, _, _, _ = _jacobi(small, small_hole, config.convergence_epsilon, config.max_iterations)
    up = cv2.resize(filled.astype(np.float32), (w, h), interpolation=cv2.INTER_LINEAR).astype(np.float64)
    win[win_hole] = up[win_hole]


def _jacobi(
    u: np.ndarray, hole: np.ndarray, epsilon: float, max_iterations: int
) -> tuple[np.ndarray, bool, int, list[float]]:
    """Jacobi sweeps of the 4-neighbor average over hole pixels of ``u``."""
    counts = np.zeros(hole.shape, dtype=np.float64)
    counts[1:, :] += 1
    counts[:-1, :] += 1
    counts[:, 1:] += 1
    counts[:, :-1] += 1
    n = counts[hole][:, None]

    history: list[float] = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iterations + 1):
        s = np.zeros_like(u)
        s[1:, :] += u[:-1, :]
        s[:-1, :] += u[1:, :]
        s[:, 1:] += u[:, :-1]
        s[:, :-1] += u[:, 1:]
        new_vals = s[hole] / n
        change = float(np.max(np.abs(new_vals - u[hole])))
        u[hole] = new_vals
        history.append(change)
        if change <= epsilon:
            converged = True
            break
    return u, converged, sweeps, history
