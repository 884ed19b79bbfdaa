"""End-to-end orchestration: load, mine, describe, train, evaluate."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .classify import LinearModel, Metrics, evaluate, train_svm
from .config import PipelineConfig
from .detector import DetectorBank, ImageFeatures, bank_max_responses, fit_background, lda_weights
from .errors import DataError, DegenerateDetectorError, InsufficientDataError
from .imaging import dense_hog, load_image, preprocess, resize, whole_image_descriptor
from .manifest import ManifestEntry
from .mining import (
    CandidateTriplet,
    DescriptorIndex,
    MinedTriplet,
    build_neighborhood,
    default_top_m,
    discriminative_map,
    entropy_from_totals,
    propose_candidates,
    select_triplets,
)
from .detector import TripletDetector

log = logging.getLogger(__name__)

WORKERS_ENV = "TRIPLETMINE_WORKERS"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: Iterable, workers: int | None = None) -> list:
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class StageTimer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        yield
        dt = time.perf_counter() - t0
        self.timings[name] = self.timings.get(name, 0.0) + dt
        log.info("stage %-14s %.2fs", name, dt)


@dataclass
class Corpus:
    images: list[np.ndarray]
    labels: np.ndarray
    class_names: list[str]
    entries: list[ManifestEntry] = field(default_factory=list)
    scale: list[tuple[float, float]] = field(default_factory=list)  # canonical px per original px (x, y)


def to_canonical(image: np.ndarray, bbox, cfg: PipelineConfig) -> np.ndarray:
    pre = preprocess(image, bbox, cfg.target_width)
    n = cfg.canonical_size
    return resize(pre, n, n)


def load_corpus(
    entries: Sequence[ManifestEntry], cfg: PipelineConfig, class_names: Sequence[str] | None = None
) -> Corpus:
    """Decode, crop and resample every entry; unreadable images are skipped."""
    names = sorted({e.label for e in entries}) if class_names is None else list(class_names)
    pos = {n: i for i, n in enumerate(names)}
    images, labels, kept, scale = [], [], [], []
    for e in entries:
        try:
            img = to_canonical(load_image(e.resolved_path), e.bbox, cfg)
        except (OSError, DataError) as exc:
            log.warning("skipping %s: %s", e.path, exc)
            continue
        images.append(img)
        labels.append(pos.get(e.label, -1))
        kept.append(e)
        scale.append((cfg.canonical_size / e.bbox[2], cfg.canonical_size / e.bbox[3]))
    return Corpus(images, np.asarray(labels, dtype=np.int64), names, kept, scale)


@dataclass
class MiningResult:
    background: object
    triplets: list[MinedTriplet]
    report: dict
    timings: dict


def _class_subsets(labels: np.ndarray, extra: int | None, rng) -> dict[int, np.ndarray]:
    """Per class, a mask of images of that class plus ``extra`` random other classes."""
    classes = np.unique(labels)
    out = {}
    for c in classes:
        if extra is None or extra >= len(classes) - 1:
            out[int(c)] = np.ones(len(labels), dtype=bool)
            continue
        others = rng.choice(classes[classes != c], size=extra, replace=False)
        out[int(c)] = np.isin(labels, np.concatenate([[c], others]))
    return out


def mine(images: Sequence[np.ndarray], labels: Sequence[int], cfg: PipelineConfig, workers: int | None = None) -> MiningResult:
    """Run neighborhood proposal and entropy selection over training images."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise InsufficientDataError("mining needs at least two classes")
    timer = StageTimer()
    rng = np.random.default_rng(cfg.rng_seed)
    side, stride, hog = cfg.patch_side, cfg.stride, cfg.hog
    n = len(images)

    with timer.stage("features"):
        dense = _map(lambda im: dense_hog(im, side, stride, hog), images, workers)
        grid = (dense[0].rows, dense[0].cols)
        cache = np.stack([d.features.astype(np.float32) for d in dense])  # (n, L, D)
    with timer.stage("background"):
        stats = fit_background((d.features for d in dense), cfg.ridge)
        del dense
    with timer.stage("neighborhoods"):
        descs = np.stack(_map(lambda im: whole_image_descriptor(im, hog), images, workers))
        index = DescriptorIndex(descs, labels)
        nb_pools = _class_subsets(labels, cfg.negative_class_subsample, rng)
        size = min(cfg.neighborhood_size, n)
        candidates: list[CandidateTriplet] = []
        seen = set()
        proposed = 0
        skipped = 0
        for seed in range(n):
            allowed = nb_pools[int(labels[seed])]
            nb = build_neighborhood(seed, index, min(size, int(allowed.sum())), allowed)
            feats = cache[list(nb.member_ids)].astype(np.float64)
            dmap = discriminative_map(feats, nb.member_labels, grid, cfg.discriminative_eps, side, stride)
            props = propose_candidates(nb, dmap, feats, cfg.top_locations, cfg.overlap_max)
            if not props:
                skipped += 1
            proposed += len(props)
            for cand in props:
                key = cand.key()
                if key not in seen:
                    seen.add(key)
                    candidates.append(cand)
        del cache
    if not candidates:
        raise InsufficientDataError("no candidate triplets were proposed")
    log.info("%d neighborhoods, %d proposals, %d unique candidates", n, proposed, len(candidates))

    with timer.stage("detectors"):
        templates = np.concatenate([c.templates for c in candidates])
        weights = lda_weights(templates, stats).reshape(len(candidates), 3, -1)
        geo = cfg.geometry
        detectors = [
            TripletDetector(weights[i], c.signature(geo.degeneracy_eps), c.class_label, geo)
            for i, c in enumerate(candidates)
        ]
        bank = DetectorBank(detectors)
    with timer.stage("entropy"):
        eval_pools = _class_subsets(labels, cfg.eval_negative_classes, rng)
        cand_labels = np.array([c.class_label for c in candidates])
        needed = np.zeros((len(candidates), n), dtype=bool)
        for c, mask in eval_pools.items():
            needed[cand_labels == c] = mask
        responses = np.full((len(candidates), n), -np.inf)

        def respond(i):
            rows = np.flatnonzero(needed[:, i])
            if rows.size == 0:
                return rows, np.zeros(0)
            sub = bank if rows.size == len(bank) else DetectorBank([detectors[r] for r in rows])
            return rows, bank_max_responses(sub, ImageFeatures(images[i], side, stride, hog), cfg.k_top, cfg.overlap_max)

        for i, (rows, vals) in enumerate(_map(respond, range(n), workers)):
            responses[rows, i] = vals
        mined = []
        discarded = 0
        for j, det in enumerate(detectors):
            pool = np.flatnonzero(needed[j])
            top_m = cfg.top_m if cfg.top_m is not None else default_top_m(len(pool))
            try:
                h, mean_top = entropy_from_totals(responses[j, pool], labels[pool], min(top_m, len(pool)))
            except DegenerateDetectorError:
                discarded += 1
                continue
            mined.append(MinedTriplet(det, h, mean_top, j, candidates[j].locations))
    with timer.stage("select"):
        selected = select_triplets(mined, cfg.triplets_per_class)

    per_class = {int(c): int(np.sum([m.detector.class_label == c for m in selected])) for c in np.unique(labels)}
    report = {
        "n_images": n,
        "neighborhoods": n,
        "neighborhoods_skipped": skipped,
        "proposals": proposed,
        "unique_candidates": len(candidates),
        "discarded_degenerate": discarded,
        "selected": len(selected),
        "selected_per_class": {str(k): v for k, v in per_class.items()},
        "candidate_entropies": [float(m.entropy) for m in mined],
    }
    return MiningResult(stats, selected, report, timer.timings)


def bot_matrix(
    images: Sequence[np.ndarray], triplets: Sequence[MinedTriplet], cfg: PipelineConfig, workers: int | None = None
) -> np.ndarray:
    """Bag-of-Triplets descriptors, one row per image."""
    bank = DetectorBank([m.detector for m in triplets])

    def one(img):
        feats = ImageFeatures(img, cfg.patch_side, cfg.stride, cfg.hog)
        t = bank_max_responses(bank, feats, cfg.k_top, cfg.overlap_max)
        return np.where(np.isfinite(t), t, 0.0)

    rows = _map(one, images, workers)
    return np.stack(rows) if rows else np.zeros((0, len(bank)))


def with_geometry(triplets: Sequence[MinedTriplet], eta_o: float, eta_s: float) -> list[MinedTriplet]:
    from .geometry import GeometryConfig

    out = []
    for m in triplets:
        g = m.detector.geometry
        det = m.detector.with_geometry(GeometryConfig(eta_o, eta_s, g.degeneracy_eps))
        out.append(MinedTriplet(det, m.entropy, m.mean_top_score, m.candidate_id, m.locations))
    return out


def train(descriptors: np.ndarray, labels: Sequence[int], cfg: PipelineConfig) -> LinearModel:
    return train_svm(descriptors, labels, cfg.svm_c, cfg.rng_seed)


def run_classification(train_imgs, train_labels, test_imgs, test_labels, cfg: PipelineConfig):
    """Mine, train and evaluate in memory; returns ``(mining, model, metrics)``."""
    mining = mine(train_imgs, train_labels, cfg)
    xtr = bot_matrix(train_imgs, mining.triplets, cfg)
    model = train(xtr, train_labels, cfg)
    xte = bot_matrix(test_imgs, mining.triplets, cfg)
    return mining, model, evaluate(model, xte, test_labels)
