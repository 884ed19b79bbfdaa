"""Seeded synthetic fine-grained corpus with ground-truth mark locations.

Every image shows the same base object (an elliptical outline carrying a ring
of shared landmark marks).  Each class adds three class-specific marks at
class-specific relative positions.  Images vary by a global rotation, a
per-mark position jitter, additive noise and *distractor* marks: copies of
mark glyphs placed at random positions, so appearance alone cannot tell a
true mark from a distractor.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

GLYPHS = ("plus", "ring", "square", "diag", "triangle", "bars", "disk", "cross", "corner", "tee")


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 4
    train_per_class: int = 20
    test_per_class: int = 20
    size: int = 192
    n_base_landmarks: int = 8
    marks_per_class: int = 3
    mark_radius: float = 11.0
    n_glyphs: int = 6
    position_jitter: float = 3.0
    rotation_jitter: float = 6.0
    scale_jitter: float = 0.0
    noise: float = 0.03
    n_distractors: int = 2
    twin_distractors: bool = True
    shared_glyphs: bool = False
    contrast: float = 0.45
    blur: float = 0.7
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class ClassLayout:
    label: int
    positions: np.ndarray  # (marks_per_class, 2) in relative [0, 1] coords
    glyphs: tuple[int, ...]


@dataclass
class SynthImage:
    image: np.ndarray
    label: int
    split: str
    landmarks: np.ndarray  # (n, 2) pixel coords; class marks first, then base landmarks
    distractors: np.ndarray  # (m, 2)


def _glyph_mask(kind: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    r = np.hypot(u, v)
    if kind == "plus":
        return ((np.abs(u) < 0.28) & (np.abs(v) < 1)) | ((np.abs(v) < 0.28) & (np.abs(u) < 1))
    if kind == "ring":
        return (r > 0.55) & (r < 1.0)
    if kind == "square":
        return (np.abs(u) < 0.8) & (np.abs(v) < 0.8)
    if kind == "diag":
        return (np.abs(u - v) < 0.45) & (np.abs(u + v) < 1.5)
    if kind == "triangle":
        return (v < 0.75) & (v > -0.9) & (np.abs(u) < (v + 0.9) * 0.55)
    if kind == "bars":
        return (np.abs(u) < 0.95) & ((np.abs(v - 0.5) < 0.22) | (np.abs(v + 0.5) < 0.22))
    if kind == "disk":
        return r < 0.85
    if kind == "cross":
        return ((np.abs(u - v) < 0.38) | (np.abs(u + v) < 0.38)) & (r < 1.1)
    if kind == "corner":
        return ((np.abs(u + 0.6) < 0.28) & (np.abs(v) < 0.9)) | ((np.abs(v - 0.6) < 0.28) & (np.abs(u) < 0.9))
    if kind == "tee":
        return ((np.abs(v + 0.6) < 0.28) & (np.abs(u) < 0.95)) | ((np.abs(u) < 0.28) & (np.abs(v) < 0.95))
    raise ValueError(kind)


class Generator:
    """Draws class layouts once, then renders images on demand."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        rng = np.random.default_rng([spec.seed, 0])
        self.base_positions = self._ring_positions(spec.n_base_landmarks)
        self.base_glyphs = tuple(int(g) for g in rng.integers(0, spec.n_glyphs, spec.n_base_landmarks))
        self.layouts = [self._layout(c, rng) for c in range(spec.n_classes)]
        if spec.shared_glyphs:
            # every class uses the first class's glyphs; only the arrangement differs
            shared = self.layouts[0].glyphs
            self.layouts = [ClassLayout(l.label, l.positions, shared) for l in self.layouts]

    @staticmethod
    def _ring_positions(n: int) -> np.ndarray:
        t = np.linspace(0, 2 * np.pi, n, endpoint=False) + np.pi / n
        return np.stack([0.5 + 0.36 * np.cos(t), 0.5 + 0.30 * np.sin(t)], axis=1)

    def _layout(self, label: int, rng) -> ClassLayout:
        spec = self.spec
        min_sep = 3.0 * spec.mark_radius / spec.size
        for _ in range(10_000):
            pos = rng.uniform(0.22, 0.78, size=(spec.marks_per_class, 2))
            d = np.hypot(*(pos[:, None] - pos[None]).transpose(2, 0, 1))
            np.fill_diagonal(d, 1.0)
            dist_base = np.hypot(*(pos[:, None] - self.base_positions[None]).transpose(2, 0, 1))
            if d.min() > 2 * min_sep and dist_base.min() > min_sep:
                break
        glyphs = tuple(int(g) for g in rng.integers(0, spec.n_glyphs, spec.marks_per_class))
        return ClassLayout(label, pos, glyphs)

    def render(self, label: int, rng, split: str = "train") -> SynthImage:
        spec = self.spec
        n = spec.size
        layout = self.layouts[label]
        angle = np.deg2rad(rng.uniform(-spec.rotation_jitter, spec.rotation_jitter))
        scale = 1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]) * scale

        def place(rel: np.ndarray) -> np.ndarray:
            centered = (rel - 0.5) * n
            pts = centered @ rot.T + n / 2.0
            return pts + rng.normal(0.0, spec.position_jitter, size=pts.shape)

        class_pts = place(layout.positions)
        base_pts = place(self.base_positions)
        landmarks = np.vstack([class_pts, base_pts])
        glyphs = list(layout.glyphs) + list(self.base_glyphs)

        distractors = rng.uniform(0.15 * n, 0.85 * n, size=(spec.n_distractors, 2))
        if spec.twin_distractors:
            # copies of class-mark glyphs from any class, at random positions
            pool = sorted({g for lay in self.layouts for g in lay.glyphs})
            dglyphs = [int(pool[i]) for i in rng.integers(0, len(pool), spec.n_distractors)]
        else:
            dglyphs = [int(g) for g in rng.integers(0, spec.n_glyphs, spec.n_distractors)]

        yy, xx = np.mgrid[0:n, 0:n].astype(float)
        img = np.full((n, n), 0.5)
        # base object outline
        cx, cy = n / 2.0, n / 2.0
        u = (xx - cx) * np.cos(angle) + (yy - cy) * np.sin(angle)
        v = -(xx - cx) * np.sin(angle) + (yy - cy) * np.cos(angle)
        ell = np.hypot(u / (0.45 * n * scale), v / (0.40 * n * scale))
        img[np.abs(ell - 1.0) < 0.025] -= 0.25

        for pts, gl in ((landmarks, glyphs), (distractors, dglyphs)):
            for (px, py), g in zip(pts, gl):
                a = angle + np.deg2rad(rng.normal(0.0, spec.rotation_jitter / 3.0 if spec.rotation_jitter else 0.0))
                du, dv = xx - px, yy - py
                lu = (du * np.cos(a) + dv * np.sin(a)) / spec.mark_radius
                lv = (-du * np.sin(a) + dv * np.cos(a)) / spec.mark_radius
                sign = 1.0 if g % 2 == 0 else -1.0
                img[_glyph_mask(GLYPHS[g % len(GLYPHS)], lu, lv)] = 0.5 + sign * spec.contrast

        if spec.blur > 0:
            img = ndimage.gaussian_filter(img, spec.blur)
        if spec.noise > 0:
            img = img + rng.normal(0.0, spec.noise, size=img.shape)
        return SynthImage(np.clip(img, 0.0, 1.0), label, split, landmarks, distractors)


def generate(spec: SynthSpec) -> list[SynthImage]:
    """Train images of every class, then test images, fully determined by ``spec.seed``."""
    gen = Generator(spec)
    out = []
    for split, per_class, stream in (("train", spec.train_per_class, 1), ("test", spec.test_per_class, 2)):
        for c in range(spec.n_classes):
            rng = np.random.default_rng([spec.seed, stream, c])
            out.extend(gen.render(c, rng, split) for _ in range(per_class))
    return out


def write_corpus(spec: SynthSpec, out_dir: str | Path) -> Path:
    """Write PNGs plus ``manifest.jsonl`` and ``synth_spec.json``; returns the manifest path."""
    from .imaging import save_image
    from .manifest import ManifestEntry, write_manifest

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, item in enumerate(generate(spec)):
        rel = Path("images") / f"{item.split}_{i:05d}_c{item.label}.png"
        save_image(out_dir / rel, item.image)
        n = item.image.shape[0]
        entries.append(
            ManifestEntry(
                path=str(rel),
                label=f"class{item.label:02d}",
                bbox=(0, 0, n, n),
                split=item.split,
                landmarks=[[round(float(x), 3), round(float(y), 3)] for x, y in item.landmarks],
                distractors=[[round(float(x), 3), round(float(y), 3)] for x, y in item.distractors],
            )
        )
    manifest = out_dir / "manifest.jsonl"
    write_manifest(manifest, entries)
    (out_dir / "synth_spec.json").write_text(json.dumps(asdict(spec), indent=2, sort_keys=True) + "\n")
    return manifest
