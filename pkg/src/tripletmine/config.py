"""Pipeline configuration with range checks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError
from .geometry import GeometryConfig
from .imaging import HogConfig


@dataclass(frozen=True)
class PipelineConfig:
    patch_side: int = 64
    stride: int = 8
    target_width: int = 500
    canonical_size: int = 256
    neighborhood_size: int = 20
    top_locations: int = 6
    triplets_per_class: int = 300
    k_top: int = 5
    eta_o: float = 0.5
    eta_s: float = 1.0
    overlap_max: float = 0.25
    top_m: int | None = None  # None: min(50, eval set size // 4)
    svm_c: float = 1.0
    rng_seed: int = 0
    negative_class_subsample: int | None = None  # neighborhoods: positive + N random classes
    eval_negative_classes: int | None = None  # entropy pool: positive + R random classes
    ridge: float | None = None  # None: 0.01 * trace(cov) / dim
    discriminative_eps: float = 1e-6
    hog_cell: int = 8
    hog_bins: int = 9

    def __post_init__(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.patch_side >= 2 * self.hog_cell, "patch_side must cover at least one HOG block")
        need(self.stride >= 1, "stride must be >= 1")
        need(self.target_width >= 64, "target_width must be >= 64")
        need(self.canonical_size >= self.patch_side, "canonical_size must be >= patch_side")
        need(self.neighborhood_size >= 1, "neighborhood_size must be >= 1")
        need(self.top_locations >= 3, "top_locations must be >= 3")
        need(self.triplets_per_class >= 1, "triplets_per_class must be >= 1")
        need(self.k_top >= 1, "k_top must be >= 1")
        need(0.0 <= self.eta_o <= 1.0, "eta_o must lie in [0, 1]")
        need(0.0 <= self.eta_s <= 1.0, "eta_s must lie in [0, 1]")
        need(0.0 <= self.overlap_max <= 1.0, "overlap_max must lie in [0, 1]")
        need(self.top_m is None or self.top_m >= 1, "top_m must be >= 1")
        need(self.svm_c > 0, "svm_c must be positive")
        need(self.negative_class_subsample is None or self.negative_class_subsample >= 1,
             "negative_class_subsample must be >= 1")
        need(self.eval_negative_classes is None or self.eval_negative_classes >= 1,
             "eval_negative_classes must be >= 1")
        need(self.ridge is None or self.ridge >= 0, "ridge must be >= 0")
        need(self.discriminative_eps > 0, "discriminative_eps must be positive")
        need(self.hog_cell >= 1 and self.hog_bins >= 1, "bad HOG configuration")

    @property
    def geometry(self) -> GeometryConfig:
        return GeometryConfig(self.eta_o, self.eta_s)

    @property
    def hog(self) -> HogConfig:
        return HogConfig(cell=self.hog_cell, bins=self.hog_bins)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)
