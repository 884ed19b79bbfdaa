"""Patch-triplet detectors with order and shape constraints, mined for fine-grained classification."""

from .classify import LinearModel, bot_descriptor, evaluate, predict, train_svm
from .config import PipelineConfig
from .detector import (
    BackgroundStats,
    TripletDetection,
    TripletDetector,
    detect_triplet,
    detect_with_mirror,
    fit_background,
    lda_weights,
    score_grid,
    top_k_nms,
)
from .geometry import GeometryConfig, TriangleSignature, order_penalty, order_sign, shape_penalty, triangle_angles
from .imaging import HogConfig, PatchLocation, extract_hog, mirror, preprocess, whole_image_descriptor
from .mining import (
    build_neighborhood,
    discriminative_map,
    entropy_score,
    propose_candidates,
    select_triplets,
)

__version__ = "0.1.0"
