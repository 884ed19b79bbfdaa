"""Bag-of-Triplets descriptors and a one-vs-rest linear SVM."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detector import DEFAULT_K, DEFAULT_OVERLAP, DetectorBank, ImageFeatures, bank_max_responses
from .errors import DegenerateTrainingError, InsufficientDataError, ShapeError
from .imaging import HogConfig

log = logging.getLogger(__name__)

SENTINEL_VALUE = 0.0


def _as_bank(model) -> DetectorBank:
    if isinstance(model, DetectorBank):
        return model
    if not model:
        raise InsufficientDataError("mined model is empty")
    return DetectorBank([getattr(m, "detector", m) for m in model])


def bot_descriptor(
    image,
    model,
    k: int = DEFAULT_K,
    overlap_max: float = DEFAULT_OVERLAP,
    side: int = 64,
    stride: int = 8,
    hog: HogConfig = HogConfig(),
) -> np.ndarray:
    """Maximum mirror-aware response of each mined triplet; misses map to 0.

    ``model`` is a sequence of mined triplets (or detectors) or a prebuilt
    :class:`DetectorBank`; ``image`` may be an array or :class:`ImageFeatures`.
    """
    bank = _as_bank(model)
    feats = image if isinstance(image, ImageFeatures) else ImageFeatures(image, side, stride, hog)
    totals = bank_max_responses(bank, feats, k, overlap_max)
    return np.where(np.isfinite(totals), totals, SENTINEL_VALUE)


@dataclass
class LinearModel:
    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray  # (n_classes,)
    classes: np.ndarray  # sorted class ids
    c: float = 1.0
    seed: int = 0
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    objectives: list = field(default_factory=list, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ShapeError(f"descriptor dim {x.shape[-1]} != model dim {self.dim}")
        return x @ self.weights.T + self.biases


def _dual_cd(x: np.ndarray, y: np.ndarray, c: float, rng, max_epochs: int, tol: float):
    """L2-regularized L1-loss SVM by dual coordinate descent (bias as a unit feature).

    Returns ``(w, b, epochs, objective history)``; the dual objective
    ``0.5 |w|^2 - sum(alpha)`` is minimized and cannot increase per step.
    """
    n, d = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    qd = np.einsum("ij,ij->i", xa, xa)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    history = []
    prev = 0.0
    epochs = 0
    for epochs in range(1, max_epochs + 1):
        for i in rng.permutation(n):
            g = y[i] * (w @ xa[i]) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == c:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                new = min(max(a - g / qd[i], 0.0), c)
                w += (new - a) * y[i] * xa[i]
                alpha[i] = new
        obj = 0.5 * float(w @ w) - float(alpha.sum())
        history.append(obj)
        if obj > prev + 1e-12 * max(1.0, abs(prev)):
            log.warning("dual objective increased: %.12g -> %.12g", prev, obj)
        if epochs > 1 and abs(prev - obj) <= tol * max(abs(prev), 1e-12):
            break
        prev = obj
    return w[:d], float(w[d]), epochs, history


def train_svm(
    descriptors: np.ndarray,
    labels: Sequence[int],
    c: float = 1.0,
    seed: int = 0,
    max_epochs: int = 1000,
    tol: float = 1e-4,
) -> LinearModel:
    x = np.asarray(descriptors, dtype=np.float64)
    y_all = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y_all):
        raise ShapeError("descriptors must be (n, dim) with one label each")
    classes = np.unique(y_all)
    if len(classes) < 2:
        raise DegenerateTrainingError("training set has fewer than two classes")
    weights = np.zeros((len(classes), x.shape[1]))
    biases = np.zeros(len(classes))
    iters = np.zeros(len(classes), dtype=np.int64)
    objectives = []
    for j, cls in enumerate(classes):
        rng = np.random.default_rng([seed, int(cls) & 0xFFFFFFFF])
        y = np.where(y_all == cls, 1.0, -1.0)
        w, b, ep, hist = _dual_cd(x, y, c, rng, max_epochs, tol)
        weights[j], biases[j], iters[j] = w, b, ep
        objectives.append(hist)
    return LinearModel(weights, biases, classes, float(c), int(seed), iters, objectives)


def predict(model: LinearModel, descriptor: np.ndarray) -> tuple[int, np.ndarray]:
    """Predicted class id and per-class decision values; ties go to the lowest id."""
    scores = model.decision_function(descriptor)
    return int(model.classes[int(np.argmax(scores))]), scores


def predict_many(model: LinearModel, descriptors: np.ndarray) -> np.ndarray:
    scores = model.decision_function(np.atleast_2d(descriptors))
    return model.classes[np.argmax(scores, axis=1)]


@dataclass
class Metrics:
    accuracy: float
    per_class_accuracy: dict
    confusion: np.ndarray  # rows: true class, columns: predicted class
    classes: np.ndarray
    unknown: int = 0


def evaluate_predictions(predicted: Sequence[int], truth: Sequence[int], classes: Sequence[int]) -> Metrics:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if truth.size == 0:
        raise InsufficientDataError("empty test set")
    classes = np.asarray(classes)
    pos = {int(c): i for i, c in enumerate(classes)}
    conf = np.zeros((len(classes), len(classes)), dtype=np.int64)
    unknown = 0
    for p, t in zip(predicted, truth):
        if int(t) not in pos:
            unknown += 1
            continue
        conf[pos[int(t)], pos[int(p)]] += 1
    if unknown:
        log.warning("%d test samples carry labels unknown to the model", unknown)
    per_class = {}
    for c, i in pos.items():
        n = conf[i].sum()
        per_class[c] = float(conf[i, i] / n) if n else float("nan")
    acc = float(np.trace(conf) / truth.size)
    return Metrics(acc, per_class, conf, classes, unknown)


def evaluate(model: LinearModel, descriptors: np.ndarray, labels: Sequence[int]) -> Metrics:
    return evaluate_predictions(predict_many(model, descriptors), labels, model.classes)
