"""Triplet localization ablation over landmark patch pools.

For random same-class image pairs, three landmarks of the first image define
a one-shot triplet detector; the detector then searches the landmark (and
distractor) patch pool of the second image.  A triplet counts as localized
when each of its three patches is the ground-truth patch or overlaps it with
IoU > 0.5.  Four modes differ only in the penalty weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detector import fit_background, iou_matrix, lda_weights, search_triplets
from .geometry import cosines_batch, cross_z_batch
from .imaging import HogConfig, PatchLocation, dense_hog, extract_hog

log = logging.getLogger(__name__)

MODES = ("Appearance Only", "Order Constraint", "Shape Constraint", "Combined")


@dataclass
class BenchResult:
    modes: tuple[str, ...]
    accuracy: np.ndarray  # (n_modes,)
    n_pairs: int
    n_triplets: int

    def improvement(self) -> np.ndarray:
        """Relative improvement over the first mode, in percent."""
        base = self.accuracy[0]
        return (self.accuracy / base - 1.0) * 100.0 if base > 0 else np.full_like(self.accuracy, np.nan)

    def rows(self) -> list[tuple[str, float, float]]:
        imp = self.improvement()
        return [(m, float(a) * 100.0, float(i)) for m, a, i in zip(self.modes, self.accuracy, imp)]


def pool_boxes(points: np.ndarray, side: int, height: int, width: int) -> np.ndarray:
    """Square patches centered on ``points``, shifted to stay inside the image."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x0 = np.clip(np.round(pts[:, 0] - side / 2.0), 0, width - side).astype(int)
    y0 = np.clip(np.round(pts[:, 1] - side / 2.0), 0, height - side).astype(int)
    return np.stack([x0, y0, x0 + side, y0 + side], axis=1)


def pool_features(image: np.ndarray, boxes: np.ndarray, hog: HogConfig) -> np.ndarray:
    return np.stack([extract_hog(image, PatchLocation(int(b[0]), int(b[1]), int(b[2] - b[0])), hog) for b in boxes])


def localization_benchmark(
    images: Sequence[np.ndarray],
    labels: Sequence[int],
    landmarks: Sequence[np.ndarray],
    distractors: Sequence[np.ndarray] | None = None,
    n_pairs: int = 1000,
    n_triplets: int = 100,
    patch_side: int = 32,
    k: int = 5,
    eta_o: float = 0.5,
    eta_s: float = 1.0,
    seed: int = 0,
    hog: HogConfig = HogConfig(),
    ridge: float | None = None,
    modes: dict[str, tuple[float, float]] | None = None,
) -> BenchResult:
    """Localization accuracy of each penalty mode over random same-class pairs."""
    if modes is None:
        modes = {
            MODES[0]: (0.0, 0.0),
            MODES[1]: (eta_o, 0.0),
            MODES[2]: (0.0, eta_s),
            MODES[3]: (eta_o, eta_s),
        }
    labels = np.asarray(labels)
    n_img = len(images)
    pools = []
    for i in range(n_img):
        h, w = images[i].shape
        pts = np.asarray(landmarks[i], dtype=float).reshape(-1, 2)
        n_lm = len(pts)
        if distractors is not None and len(distractors[i]):
            pts = np.vstack([pts, np.asarray(distractors[i], dtype=float).reshape(-1, 2)])
        boxes = pool_boxes(pts, patch_side, h, w)
        pools.append((boxes, pool_features(images[i], boxes, hog), n_lm))

    stride = max(hog.cell, patch_side // 4)
    stats = fit_background((dense_hog(img, patch_side, stride - stride % hog.cell, hog).features for img in images), ridge)

    rng = np.random.default_rng(seed)
    by_class = {}
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            log.warning("class %s has fewer than 2 images, skipped", c)
            continue
        by_class[int(c)] = idx
    if not by_class:
        raise ValueError("no class has two images")
    classes = sorted(by_class)

    names = tuple(modes)
    etas = np.array([modes[m] for m in names])
    hits = np.zeros(len(names))
    total = 0
    for _ in range(n_pairs):
        c = classes[rng.integers(len(classes))]
        i1, i2 = rng.choice(by_class[c], size=2, replace=False)
        boxes1, feats1, n1 = pools[i1]
        boxes2, feats2, n2 = pools[i2]
        n_common = min(n1, n2)
        if n_common < 3:
            continue
        roles = np.stack([rng.choice(n_common, size=3, replace=False) for _ in range(n_triplets)])
        centers1 = (boxes1[:, :2] + boxes1[:, 2:]) / 2.0
        a, b, cc = centers1[roles[:, 0]], centers1[roles[:, 1]], centers1[roles[:, 2]]
        z = cross_z_batch(a, b, cc)
        cos, _ = cosines_batch(a, b, cc)
        signs = np.sign(z).astype(np.int8)
        ok = signs != 0
        if not ok.any():
            continue
        roles, signs, cos = roles[ok], signs[ok], cos[ok]
        m = len(roles)
        weights = lda_weights(feats1[roles.ravel()], stats).reshape(m, 3, -1)
        scores = np.einsum("mrd,nd->mrn", weights, feats2)
        iou2 = iou_matrix(boxes2)
        for j, (eo, es) in enumerate(etas):
            res = search_triplets(
                scores, boxes2, signs, cos,
                np.full(m, eo), np.full(m, es), np.full(m, 1e-6),
                k, 1.0, iou2,
            )
            found = res.index >= 0
            same = res.index == roles
            near = iou2[np.maximum(res.index, 0), roles] > 0.5
            correct = found & (same | near)
            hits[j] += np.count_nonzero(correct.all(axis=1))
        total += m
    return BenchResult(names, hits / max(total, 1), n_pairs, total)
