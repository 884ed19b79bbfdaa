"""LDA appearance models and geometrically penalized triplet detection.

The search over triplets follows the greedy scheme: keep the top ``k``
non-overlapping windows of each appearance model, then score all ``k**3``
role-assigned combinations with

    total = (S_A + S_B + S_C) * p_o * p_s

Everything below :func:`detect_triplet` is vectorized over a *bank* of
detectors so mining can score thousands of candidates per image in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .errors import InsufficientDataError, ShapeError, SingularCovarianceError
from .geometry import (
    MIN_VERTEX_DIST,
    GeometryConfig,
    TriangleSignature,
    cosines_batch,
    cross_z_batch,
)
from .imaging import DenseFeatures, HogConfig, PatchLocation, dense_hog, mirror

NO_DETECTION = float("-inf")
DEFAULT_K = 5
DEFAULT_OVERLAP = 0.25


# -- background statistics -------------------------------------------------


@dataclass
class BackgroundStats:
    """Patch mean and ridge-regularized covariance (``sigma`` includes ``lam * I``)."""

    mu: np.ndarray
    sigma: np.ndarray
    lam: float
    count: int = 0
    _chol: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def cholesky(self):
        if self._chol is None:
            try:
                self._chol = linalg.cho_factor(self.sigma, lower=True, check_finite=True)
            except linalg.LinAlgError as exc:
                raise SingularCovarianceError(
                    f"covariance not positive definite (lambda={self.lam:g}); use a larger ridge"
                ) from exc
        return self._chol


class CovarianceAccumulator:
    """One-pass mean/scatter accumulator; batches combine with Chan's update.

    Partial accumulators built on separate workers can be combined with
    :meth:`merge`; merging in a fixed order gives a deterministic result.
    """

    def __init__(self, dim: int | None = None):
        self.n = 0
        self.mean = None if dim is None else np.zeros(dim)
        self.scatter = None if dim is None else np.zeros((dim, dim))

    def update(self, batch: np.ndarray) -> "CovarianceAccumulator":
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        m = batch.shape[0]
        if m == 0:
            return self
        bmean = batch.mean(axis=0)
        centered = batch - bmean
        other = CovarianceAccumulator()
        other.n, other.mean, other.scatter = m, bmean, centered.T @ centered
        return self.merge(other)

    def merge(self, other: "CovarianceAccumulator") -> "CovarianceAccumulator":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.scatter = other.n, other.mean.copy(), other.scatter.copy()
            return self
        if other.mean.shape != self.mean.shape:
            raise ShapeError("accumulator dimensions differ")
        n = self.n + other.n
        delta = other.mean - self.mean
        self.scatter = self.scatter + other.scatter + np.outer(delta, delta) * (self.n * other.n / n)
        self.mean = self.mean + delta * (other.n / n)
        self.n = n
        return self

    def finalize(self, lam: float | None = None) -> BackgroundStats:
        if self.n < 2:
            raise InsufficientDataError(f"need at least 2 patches, got {self.n}")
        cov = self.scatter / self.n
        cov = 0.5 * (cov + cov.T)
        dim = cov.shape[0]
        if lam is None:
            lam = 0.01 * float(np.trace(cov)) / dim
            if lam <= 0:
                lam = 1e-6
        sigma = cov + lam * np.eye(dim)
        return BackgroundStats(self.mean.copy(), sigma, float(lam), self.n)


def fit_background(patches: Iterable[np.ndarray], lam: float | None = None) -> BackgroundStats:
    """Mean and covariance of a stream of feature vectors (or 2-D batches).

    ``lam=None`` picks the ridge as ``0.01 * trace(cov) / dim``.
    """
    acc = CovarianceAccumulator()
    for p in patches:
        acc.update(p)
    return acc.finalize(lam)


def lda_weights(template: np.ndarray, stats: BackgroundStats) -> np.ndarray:
    """Solve ``sigma @ w = template - mu``; accepts one template or a stack."""
    template = np.asarray(template, dtype=np.float64)
    if template.shape[-1] != stats.dim:
        raise ShapeError(f"template dim {template.shape[-1]} != background dim {stats.dim}")
    rhs = (template - stats.mu).T
    w = linalg.cho_solve(stats.cholesky(), rhs, check_finite=False)
    return np.ascontiguousarray(w.T)


# -- detectors -------------------------------------------------------------


@dataclass
class TripletDetector:
    weights: np.ndarray  # (3, dim), rows are roles A, B, C
    signature: TriangleSignature
    class_label: int
    geometry: GeometryConfig = GeometryConfig()

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != 3:
            raise ShapeError(f"weights must have shape (3, dim), got {self.weights.shape}")

    def with_geometry(self, geometry: GeometryConfig) -> "TripletDetector":
        return TripletDetector(self.weights, self.signature, self.class_label, geometry)


@dataclass
class TripletDetection:
    locations: tuple[PatchLocation, PatchLocation, PatchLocation] | None
    appearance_scores: tuple[float, float, float]
    penalties: tuple[float, float]
    total: float
    mirrored: bool = False

    @property
    def found(self) -> bool:
        return self.locations is not None


def _no_detection(mirrored: bool = False) -> TripletDetection:
    nan = float("nan")
    return TripletDetection(None, (nan, nan, nan), (nan, nan), NO_DETECTION, mirrored)


class DetectorBank:
    """A stack of triplet detectors scored together."""

    def __init__(self, detectors: Sequence[TripletDetector]):
        if not detectors:
            raise InsufficientDataError("empty detector bank")
        self.detectors = list(detectors)
        self.weights = np.stack([d.weights for d in detectors])  # (M, 3, D)
        self.signs = np.array([d.signature.order_sign for d in detectors], dtype=np.int8)
        self.cosines = np.array([d.signature.cosines for d in detectors], dtype=np.float64)
        self.eta_o = np.array([d.geometry.eta_o for d in detectors], dtype=np.float64)
        self.eta_s = np.array([d.geometry.eta_s for d in detectors], dtype=np.float64)
        self.eps = np.array([d.geometry.degeneracy_eps for d in detectors], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.detectors)

    def appearance_scores(self, dense: DenseFeatures) -> np.ndarray:
        """Scores of every appearance model at every window, shape ``(M, 3, N)``."""
        m, _, d = self.weights.shape
        flat = dense.features @ self.weights.reshape(m * 3, d).T
        return flat.T.reshape(m, 3, -1)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray | None = None) -> np.ndarray:
    """Pairwise IoU of ``(x0, y0, x1, y1)`` boxes."""
    a = np.asarray(boxes_a, dtype=np.float64)
    b = a if boxes_b is None else np.asarray(boxes_b, dtype=np.float64)
    ix = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    iy = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = ix * iy
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def nms_indices(scores: np.ndarray, iou: np.ndarray, k: int, overlap_max: float) -> np.ndarray:
    """Greedy NMS over each row of ``scores`` (shape ``(P, N)``).

    Returns ``(P, k)`` window indices in descending score order, ``-1`` where
    fewer than ``k`` windows survive.  Ties go to the lower window index.
    """
    scores = np.atleast_2d(scores)
    p, n = scores.shape
    picks = np.full((p, k), -1, dtype=np.intp)
    alive = np.ones((p, n), dtype=bool)
    rows = np.arange(p)
    for t in range(min(k, n)):
        masked = np.where(alive, scores, -np.inf)
        idx = np.argmax(masked, axis=1)
        ok = alive[rows, idx]
        if not ok.any():
            break
        picks[ok, t] = idx[ok]
        alive &= ~(iou[idx] > overlap_max) | ~ok[:, None]
        alive[rows[ok], idx[ok]] = False
    return picks


@dataclass
class SearchResult:
    total: np.ndarray  # (M,)
    index: np.ndarray  # (M, 3) window indices, -1 if none
    appearance: np.ndarray  # (M, 3)
    p_o: np.ndarray
    p_s: np.ndarray


def search_triplets(
    scores: np.ndarray,
    boxes: np.ndarray,
    bank_signs: np.ndarray,
    bank_cosines: np.ndarray,
    eta_o: np.ndarray,
    eta_s: np.ndarray,
    eps: np.ndarray,
    k: int,
    overlap_max: float,
    iou: np.ndarray | None = None,
) -> SearchResult:
    """Greedy top-``k`` triplet search for ``M`` detectors over one window pool.

    ``scores`` has shape ``(M, 3, N)``; ``boxes`` is ``(N, 4)``.
    """
    m, _, n = scores.shape
    boxes = np.asarray(boxes, dtype=np.float64)
    if iou is None:
        iou = iou_matrix(boxes)
    centers = np.stack([(boxes[:, 0] + boxes[:, 2]) / 2, (boxes[:, 1] + boxes[:, 3]) / 2], axis=1)
    picks = nms_indices(scores.reshape(m * 3, n), iou, k, overlap_max).reshape(m, 3, k)
    ia = picks[:, 0, :, None, None]
    ib = picks[:, 1, None, :, None]
    ic = picks[:, 2, None, None, :]
    ia, ib, ic = np.broadcast_arrays(ia, ib, ic)  # (M, k, k, k)
    valid = (ia >= 0) & (ib >= 0) & (ic >= 0)
    sa_, sb_, sc_ = np.maximum(ia, 0), np.maximum(ib, 0), np.maximum(ic, 0)
    valid &= iou[sa_, sb_] <= overlap_max
    valid &= iou[sa_, sc_] <= overlap_max
    valid &= iou[sb_, sc_] <= overlap_max

    pa, pb, pc = centers[sa_], centers[sb_], centers[sc_]
    z = cross_z_batch(pa, pb, pc)
    cos, shortest = cosines_batch(pa, pb, pc)
    expand = (slice(None), None, None, None)
    valid &= (np.abs(z) > eps[expand]) & (shortest >= MIN_VERTEX_DIST)

    rows = np.arange(m)[expand]
    s_a = scores[rows, 0, sa_]
    s_b = scores[rows, 1, sb_]
    s_c = scores[rows, 2, sc_]
    g = np.sign(z).astype(np.int8)
    ref = bank_signs[expand]
    p_o = np.where((ref == 0) | (g == ref), 1.0, 1.0 - eta_o[expand])
    diff = np.abs(cos - bank_cosines[:, None, None, None, :]).sum(axis=-1)
    p_s = 1.0 - eta_s[expand] * diff / 6.0
    total = (s_a + s_b + s_c) * p_o * p_s
    total = np.where(valid, total, -np.inf)

    flat = total.reshape(m, -1)
    best = np.argmax(flat, axis=1)
    best_total = flat[np.arange(m), best]
    found = np.isfinite(best_total)
    unr = np.unravel_index(best, (k, k, k))
    r = np.arange(m)
    index = np.stack([picks[r, 0, unr[0]], picks[r, 1, unr[1]], picks[r, 2, unr[2]]], axis=1)
    index[~found] = -1
    app = np.stack(
        [s_a[r, unr[0], unr[1], unr[2]], s_b[r, unr[0], unr[1], unr[2]], s_c[r, unr[0], unr[1], unr[2]]], axis=1
    )
    po_best = p_o[r, unr[0], unr[1], unr[2]]
    ps_best = p_s[r, unr[0], unr[1], unr[2]]
    app[~found] = np.nan
    po_best = np.where(found, po_best, np.nan)
    ps_best = np.where(found, ps_best, np.nan)
    return SearchResult(np.where(found, best_total, NO_DETECTION), index, app, po_best, ps_best)


# -- single-image API ------------------------------------------------------


def _as_dense(image, side: int, stride: int, hog: HogConfig) -> DenseFeatures:
    if isinstance(image, DenseFeatures):
        return image
    return dense_hog(np.asarray(image, dtype=np.float64), side, stride, hog)


def score_grid(image, w: np.ndarray, side: int = 64, stride: int = 8, hog: HogConfig = HogConfig()) -> np.ndarray:
    """Dense map of ``w . feature`` at every sliding-window location."""
    dense = _as_dense(image, side, stride, hog)
    return (dense.features @ np.asarray(w, dtype=np.float64)).reshape(dense.rows, dense.cols)


def top_k_nms(
    score_map: np.ndarray, k: int, overlap_max: float = DEFAULT_OVERLAP, side: int = 64, stride: int = 8
) -> list[tuple[PatchLocation, float]]:
    """Greedy non-overlapping top-``k`` windows of a score map."""
    rows, cols = score_map.shape
    ys, xs = np.meshgrid(np.arange(rows) * stride, np.arange(cols) * stride, indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()
    boxes = np.stack([xs, ys, xs + side, ys + side], axis=1)
    flat = score_map.ravel()
    picks = nms_indices(flat[None, :], iou_matrix(boxes), k, overlap_max)[0]
    return [(PatchLocation(int(xs[i]), int(ys[i]), side), float(flat[i])) for i in picks if i >= 0]


def _detection_from(result: SearchResult, j: int, dense: DenseFeatures, mirrored: bool, width: int):
    if not np.isfinite(result.total[j]):
        return _no_detection(mirrored)
    locs = []
    for i in result.index[j]:
        loc = dense.location(int(i))
        if mirrored:
            loc = PatchLocation(width - loc.x - loc.side, loc.y, loc.side)
        locs.append(loc)
    sa, sb, sc = (float(v) for v in result.appearance[j])
    po, ps = float(result.p_o[j]), float(result.p_s[j])
    return TripletDetection(tuple(locs), (sa, sb, sc), (po, ps), (sa + sb + sc) * po * ps, mirrored)


def _bank_search(bank: DetectorBank, dense: DenseFeatures, k: int, overlap_max: float, iou=None) -> SearchResult:
    return search_triplets(
        bank.appearance_scores(dense),
        dense.boxes,
        bank.signs,
        bank.cosines,
        bank.eta_o,
        bank.eta_s,
        bank.eps,
        k,
        overlap_max,
        iou,
    )


def detect_triplet(
    image,
    det: TripletDetector,
    k: int = DEFAULT_K,
    overlap_max: float = DEFAULT_OVERLAP,
    side: int = 64,
    stride: int = 8,
    hog: HogConfig = HogConfig(),
) -> TripletDetection:
    """Best triplet of ``det`` in ``image`` (an array or precomputed :class:`DenseFeatures`).

    Locations are reported in the frame of the input.  When no combination is
    valid the result has ``total == -inf``.
    """
    dense = _as_dense(image, side, stride, hog)
    result = _bank_search(DetectorBank([det]), dense, k, overlap_max)
    return _detection_from(result, 0, dense, False, 0)


def detect_with_mirror(
    image: np.ndarray,
    det: TripletDetector,
    k: int = DEFAULT_K,
    overlap_max: float = DEFAULT_OVERLAP,
    side: int = 64,
    stride: int = 8,
    hog: HogConfig = HogConfig(),
) -> TripletDetection:
    """Larger of the detections in ``image`` and its mirror; ties keep the original."""
    image = np.asarray(image, dtype=np.float64)
    plain = detect_triplet(image, det, k, overlap_max, side, stride, hog)
    dense_m = dense_hog(mirror(image), side, stride, hog)
    result = _bank_search(DetectorBank([det]), dense_m, k, overlap_max)
    flipped = _detection_from(result, 0, dense_m, True, image.shape[1])
    return flipped if flipped.total > plain.total else plain


class ImageFeatures:
    """Dense features of an image and its mirror, computed once and reused."""

    def __init__(self, image: np.ndarray, side: int = 64, stride: int = 8, hog: HogConfig = HogConfig()):
        image = np.asarray(image, dtype=np.float64)
        self.width = image.shape[1]
        self.plain = dense_hog(image, side, stride, hog)
        self.mirrored = dense_hog(mirror(image), side, stride, hog)
        self.iou = iou_matrix(self.plain.boxes)


def bank_max_responses(
    bank: DetectorBank,
    feats: ImageFeatures,
    k: int = DEFAULT_K,
    overlap_max: float = DEFAULT_OVERLAP,
    chunk: int = 512,
) -> np.ndarray:
    """Mirror-maximized detection totals of every detector in ``bank``."""
    out = np.empty(len(bank))
    for start in range(0, len(bank), chunk):
        sub = _BankSlice(bank, start, start + chunk)
        a = _bank_search(sub, feats.plain, k, overlap_max, feats.iou).total
        b = _bank_search(sub, feats.mirrored, k, overlap_max, feats.iou).total
        out[start : start + len(sub)] = np.where(b > a, b, a)
    return out


class _BankSlice(DetectorBank):
    def __init__(self, bank: DetectorBank, start: int, stop: int):
        sl = slice(start, stop)
        self.detectors = bank.detectors[sl]
        self.weights = bank.weights[sl]
        self.signs = bank.signs[sl]
        self.cosines = bank.cosines[sl]
        self.eta_o = bank.eta_o[sl]
        self.eta_s = bank.eta_s[sl]
        self.eps = bank.eps[sl]
