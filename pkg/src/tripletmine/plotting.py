"""Report figures written next to the CSV tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

ROLE_COLORS = ("tab:red", "tab:green", "tab:blue")


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def confusion_figure(confusion: np.ndarray, class_names, path) -> Path:
    n = len(class_names)
    fig, ax = plt.subplots(figsize=(1.0 + 0.5 * n, 1.0 + 0.5 * n))
    rows = confusion.sum(axis=1, keepdims=True)
    norm = np.divide(confusion, rows, out=np.zeros(confusion.shape, dtype=float), where=rows > 0)
    ax.imshow(norm, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(class_names, rotation=90, fontsize=7)
    ax.set_yticklabels(class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    return _save(fig, path)


def class_response_figure(mean_responses: np.ndarray, class_names, triplet_classes, path) -> Path:
    """Mean BoT response of each test class (rows) over the triplet blocks (columns)."""
    fig, ax = plt.subplots(figsize=(8, 1.0 + 0.4 * len(class_names)))
    im = ax.imshow(mean_responses, aspect="auto", cmap="viridis", interpolation="nearest")
    bounds = np.flatnonzero(np.diff(np.asarray(triplet_classes))) + 0.5
    for b in bounds:
        ax.axvline(b, color="w", lw=0.6)
    ax.set_yticks(range(len(class_names)))
    ax.set_yticklabels(class_names, fontsize=7)
    ax.set_xlabel("triplet (grouped by class)")
    fig.colorbar(im, ax=ax, fraction=0.03)
    return _save(fig, path)


def entropy_histogram(entropies, path, max_entropy: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.hist(entropies, bins=30, color="0.4")
    if max_entropy is not None:
        ax.axvline(max_entropy, color="tab:red", ls="--", lw=1)
    ax.set_xlabel("class entropy of top detections")
    ax.set_ylabel("candidates")
    return _save(fig, path)


def localization_bars(rows, path) -> Path:
    names = [r[0] for r in rows]
    acc = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(range(len(names)), acc, color=["0.6", "tab:orange", "tab:blue", "tab:green"][: len(names)])
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=15, fontsize=8)
    ax.set_ylabel("localization accuracy (%)")
    return _save(fig, path)


def heat_overlay(image: np.ndarray, score_map: np.ndarray, side: int, stride: int, path, boxes=()) -> Path:
    """Discriminative scores painted at window centers over the image."""
    h, w = image.shape
    rows, cols = score_map.shape
    fig, ax = plt.subplots(figsize=(4, 4 * h / w))
    ax.imshow(image, cmap="gray", vmin=0, vmax=1)
    half = side / 2.0
    extent = (half - stride / 2, half + (cols - 0.5) * stride, half + (rows - 0.5) * stride, half - stride / 2)
    ax.imshow(score_map, cmap="jet", alpha=0.45, extent=extent, interpolation="bilinear")
    for x0, y0, x1, y1 in boxes:
        ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, ec="w", lw=1))
    ax.set_xlim(0, w)
    ax.set_ylim(h, 0)
    ax.axis("off")
    return _save(fig, path)


def triplet_overlay(image: np.ndarray, locations, path, title: str = "") -> Path:
    h, w = image.shape
    fig, ax = plt.subplots(figsize=(4, 4 * h / w))
    ax.imshow(image, cmap="gray", vmin=0, vmax=1)
    centers = []
    for loc, color in zip(locations, ROLE_COLORS):
        ax.add_patch(Rectangle((loc.x, loc.y), loc.side, loc.side, fill=False, ec=color, lw=1.5))
        centers.append(loc.center)
    if len(centers) == 3:
        xs, ys = zip(*(centers + centers[:1]))
        ax.plot(xs, ys, color="y", lw=1)
    if title:
        ax.set_title(title, fontsize=8)
    ax.axis("off")
    return _save(fig, path)
