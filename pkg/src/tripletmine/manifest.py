"""Line-oriented JSON dataset manifests.

One object per line::

    {"path": "img/0001.png", "label": "audi_a4", "bbox": [x, y, w, h],
     "split": "train", "landmarks": [[x, y], ...]}

``landmarks`` and ``distractors`` are optional.  Relative paths resolve
against the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

SPLITS = ("train", "test")


@dataclass
class ManifestEntry:
    path: str
    label: str
    bbox: tuple[float, float, float, float]
    split: str = "train"
    landmarks: list | None = None
    distractors: list | None = None
    root: Path | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.label:
            raise DataError(f"{self.path}: empty label")
        if len(self.bbox) != 4 or self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise DataError(f"{self.path}: bbox must be [x, y, w, h] with positive area")
        if self.split not in SPLITS:
            raise DataError(f"{self.path}: unknown split {self.split!r}")
        self.bbox = tuple(self.bbox)

    @property
    def resolved_path(self) -> Path:
        p = Path(self.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def to_json(self) -> str:
        d = {"path": self.path, "label": self.label, "bbox": list(self.bbox), "split": self.split}
        if self.landmarks is not None:
            d["landmarks"] = self.landmarks
        if self.distractors is not None:
            d["distractors"] = self.distractors
        return json.dumps(d, sort_keys=True)


def parse_manifest(text: str, root: Path | None = None) -> list[ManifestEntry]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            d = json.loads(line)
            entry = ManifestEntry(
                path=d["path"],
                label=str(d["label"]),
                bbox=tuple(d["bbox"]),
                split=d.get("split", "train"),
                landmarks=d.get("landmarks"),
                distractors=d.get("distractors"),
                root=root,
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"manifest line {lineno}: {exc}") from exc
        entries.append(entry)
    return entries


def load_manifest(path: str | Path, check_paths: bool = True) -> list[ManifestEntry]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    entries = parse_manifest(text, path.parent)
    if check_paths:
        missing = [e.path for e in entries if not e.resolved_path.exists()]
        if missing:
            raise DataError(f"{len(missing)} manifest paths do not exist, e.g. {missing[0]}")
    return entries


def dump_manifest(entries) -> str:
    return "".join(e.to_json() + "\n" for e in entries)


def write_manifest(path: str | Path, entries) -> None:
    Path(path).write_text(dump_manifest(entries))
