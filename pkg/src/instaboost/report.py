"""File outputs for the CLI: colormapped heatmaps, timing figures, CSV."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .heatmap import ConsistencyHeatmap


def heatmap_to_rgb(hm: ConsistencyHeatmap) -> np.ndarray:
    """Colormap the source-resolution value grid into an 8-bit RGB array."""
    grid = hm.upsampled
    top = grid.max()
    norm = grid / top if top > 0 else np.zeros_like(grid)
    cmap = matplotlib.colormaps["jet"]
    return (cmap(norm)[:, :, :3] * 255).astype(np.uint8)


def save_heatmap_png(hm: ConsistencyHeatmap, out_path: str) -> None:
    Image.fromarray(heatmap_to_rgb(hm)).save(out_path, format="PNG")


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def save_stage_figure(stage_seconds: dict[str, float], out_path: str) -> None:
    """Bar chart of cumulative per-stage seconds for one augmentation run."""
    stages = sorted(stage_seconds)
    values = [stage_seconds[s] for s in stages]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(stages, values, color="steelblue")
    ax.set_ylabel("seconds (cumulative)")
    ax.set_title("augmentation time by stage")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def save_bench_figure(rows: list[dict], out_path: str) -> None:
    """Grouped bars of exact vs accelerated heatmap latency per image size."""
    labels = [r["size"] for r in rows]
    exact = [r.get("exact_ms", float("nan")) for r in rows]
    accel = [r["accelerated_ms"] for r in rows]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, exact, width=0.4, label="exact", color="indianred")
    ax.bar(x + 0.2, accel, width=0.4, label="accelerated", color="steelblue")
    ax.set_xticks(x, labels)
    ax.set_ylabel("ms per heatmap")
    ax.set_title("heatmap latency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
