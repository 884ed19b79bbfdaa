"""Neighborhood-based candidate proposal and entropy-based triplet selection."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detector import (
    DEFAULT_K,
    DEFAULT_OVERLAP,
    BackgroundStats,
    TripletDetector,
    detect_with_mirror,
    iou_matrix,
    lda_weights,
    nms_indices,
)
from .errors import DegenerateDetectorError, DegenerateTriangleError, InsufficientDataError, ShapeError
from .geometry import GeometryConfig, TriangleSignature, order_sign, triangle_angles
from .imaging import HogConfig, PatchLocation

log = logging.getLogger(__name__)

DISCRIMINATIVE_EPS = 1e-6


@dataclass(frozen=True)
class Neighborhood:
    seed_id: int
    seed_label: int
    member_ids: tuple[int, ...]
    member_labels: tuple[int, ...]


@dataclass
class DiscriminativeMap:
    scores: np.ndarray  # (rows, cols)
    side: int = 64
    stride: int = 8

    def location(self, flat_index: int) -> PatchLocation:
        r, c = divmod(int(flat_index), self.scores.shape[1])
        return PatchLocation(c * self.stride, r * self.stride, self.side)

    def boxes(self) -> np.ndarray:
        rows, cols = self.scores.shape
        ys, xs = np.meshgrid(np.arange(rows) * self.stride, np.arange(cols) * self.stride, indexing="ij")
        xs, ys = xs.ravel(), ys.ravel()
        return np.stack([xs, ys, xs + self.side, ys + self.side], axis=1)


@dataclass
class CandidateTriplet:
    source_neighborhood: int
    class_label: int
    locations: tuple[PatchLocation, PatchLocation, PatchLocation]
    templates: np.ndarray  # (3, dim)

    def signature(self, eps: float = 1e-6) -> TriangleSignature:
        a, b, c = (loc.center for loc in self.locations)
        return TriangleSignature(order_sign(a, b, c, eps), triangle_angles(a, b, c))

    def key(self) -> tuple:
        boxes = tuple(loc.box for loc in self.locations)
        return (self.class_label, boxes, self.templates.tobytes())


@dataclass
class MinedTriplet:
    detector: TripletDetector
    entropy: float
    mean_top_score: float
    candidate_id: int
    locations: tuple[PatchLocation, PatchLocation, PatchLocation] | None = None


class DescriptorIndex:
    """Brute-force Euclidean index over whole-image descriptors."""

    def __init__(self, descriptors: np.ndarray, labels: Sequence[int]):
        self.descriptors = np.asarray(descriptors, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.labels) != len(self.descriptors):
            raise ShapeError("one label per descriptor required")
        self._sqnorm = (self.descriptors**2).sum(axis=1)

    def __len__(self) -> int:
        return len(self.labels)

    def distances(self, i: int) -> np.ndarray:
        d2 = self._sqnorm + self._sqnorm[i] - 2.0 * (self.descriptors @ self.descriptors[i])
        return np.sqrt(np.maximum(d2, 0.0))


def build_neighborhood(
    seed: int, index: DescriptorIndex, size: int = 20, allowed: np.ndarray | None = None
) -> Neighborhood:
    """Seed image plus its ``size - 1`` nearest neighbors.

    ``allowed`` optionally restricts the neighbor pool (boolean mask).  Ties
    in distance resolve toward the lower image id.
    """
    pool = len(index) if allowed is None else int(np.count_nonzero(allowed))
    if size < 1 or size > pool:
        raise InsufficientDataError(f"neighborhood size {size} exceeds pool of {pool} images")
    dist = index.distances(seed)
    ids = np.arange(len(index))
    mask = ids != seed
    if allowed is not None:
        mask &= allowed
    cand = ids[mask]
    order = np.lexsort((cand, dist[cand]))
    members = (seed,) + tuple(int(i) for i in cand[order][: size - 1])
    return Neighborhood(seed, int(index.labels[seed]), members, tuple(int(index.labels[i]) for i in members))


def discriminative_map(
    features: np.ndarray,
    labels: Sequence[int],
    grid_shape: tuple[int, int],
    eps: float = DISCRIMINATIVE_EPS,
    side: int = 64,
    stride: int = 8,
) -> DiscriminativeMap:
    """Between-class over within-class scatter at every aligned location.

    ``features`` has shape ``(members, locations, dim)``.
    """
    feats = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    overall = feats.mean(axis=0)
    num = np.zeros(feats.shape[1])
    den = np.zeros(feats.shape[1])
    for c in np.unique(labels):
        fc = feats[labels == c]
        mc = fc.mean(axis=0)
        num += ((mc - overall) ** 2).sum(axis=-1)
        if len(fc) > 1:
            den += ((fc - mc) ** 2).sum(axis=(0, 2))
    scores = num / np.maximum(den, eps)
    return DiscriminativeMap(scores.reshape(grid_shape), side, stride)


def propose_candidates(
    nbhd: Neighborhood,
    dmap: DiscriminativeMap,
    features: np.ndarray,
    top_n: int = 6,
    overlap_max: float = DEFAULT_OVERLAP,
    eps: float = 1e-6,
) -> list[CandidateTriplet]:
    """All 3-subsets of the top ``top_n`` non-overlapping discriminative locations.

    ``features`` are the members' patch features, ``(members, locations, dim)``,
    in the order of ``nbhd.member_ids``.
    """
    flat = dmap.scores.ravel()
    picks = nms_indices(flat[None, :], iou_matrix(dmap.boxes()), top_n, overlap_max)[0]
    picks = [int(i) for i in picks if i >= 0]
    if len(picks) < 3:
        log.info("neighborhood %d: only %d locations survive NMS, skipped", nbhd.seed_id, len(picks))
        return []
    positives = np.asarray(nbhd.member_labels) == nbhd.seed_label
    templates = np.asarray(features, dtype=np.float64)[positives][:, picks].mean(axis=0)
    out = []
    # picks are already in descending-score order, so combinations stay canonical
    for combo in itertools.combinations(range(len(picks)), 3):
        locs = tuple(dmap.location(picks[i]) for i in combo)
        a, b, c = (loc.center for loc in locs)
        if order_sign(a, b, c, eps) == 0:
            continue
        try:
            triangle_angles(a, b, c)
        except DegenerateTriangleError:
            continue
        out.append(CandidateTriplet(nbhd.seed_id, nbhd.seed_label, locs, templates[list(combo)].copy()))
    return out


def make_detector(cand: CandidateTriplet, stats: BackgroundStats, geometry: GeometryConfig) -> TripletDetector:
    weights = lda_weights(cand.templates, stats)
    return TripletDetector(weights, cand.signature(geometry.degeneracy_eps), cand.class_label, geometry)


def default_top_m(n_eval: int) -> int:
    return max(1, min(50, n_eval // 4))


def class_entropy(labels: Sequence[int]) -> float:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum()) + 0.0


def entropy_from_totals(totals: np.ndarray, labels: Sequence[int], top_m: int) -> tuple[float, float]:
    """Entropy of the class labels of the ``top_m`` highest totals, and their mean."""
    totals = np.asarray(totals, dtype=np.float64)
    labels = np.asarray(labels)
    finite = np.flatnonzero(np.isfinite(totals))
    if finite.size == 0:
        raise DegenerateDetectorError("detector never fired on the evaluation set")
    order = finite[np.lexsort((finite, -totals[finite]))][:top_m]
    return class_entropy(labels[order]), float(totals[order].mean())


def entropy_score(
    det: TripletDetector,
    images: Sequence[np.ndarray],
    labels: Sequence[int],
    top_m: int | None = None,
    k: int = DEFAULT_K,
    overlap_max: float = DEFAULT_OVERLAP,
    side: int = 64,
    stride: int = 8,
    hog: HogConfig = HogConfig(),
) -> tuple[float, float]:
    if len(set(int(l) for l in labels)) < 2:
        raise InsufficientDataError("evaluation images must span at least two classes")
    if top_m is None:
        top_m = default_top_m(len(images))
    if top_m > len(images):
        raise InsufficientDataError(f"top_m={top_m} exceeds {len(images)} evaluation images")
    totals = [detect_with_mirror(img, det, k, overlap_max, side, stride, hog).total for img in images]
    return entropy_from_totals(np.asarray(totals), labels, top_m)


def select_triplets(candidates: Sequence[MinedTriplet], per_class: int = 300) -> list[MinedTriplet]:
    """Lowest-entropy triplets per class, grouped by class in ascending label order.

    Ties break on higher mean top score, then lower candidate id.
    """
    by_class: dict[int, list[MinedTriplet]] = {}
    for m in candidates:
        by_class.setdefault(m.detector.class_label, []).append(m)
    out = []
    for label in sorted(by_class):
        pool = sorted(by_class[label], key=lambda m: (m.entropy, -m.mean_top_score, m.candidate_id))
        if len(pool) < per_class:
            log.warning("class %d: only %d candidates for %d requested triplets", label, len(pool), per_class)
        out.extend(pool[:per_class])
    return out


def max_entropy(n_classes: int) -> float:
    return math.log(n_classes)
