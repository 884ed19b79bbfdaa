"""Versioned binary model container.

Layout::

    b"TRIPMDL\\0"                 magic
    uint32 LE                     format version
    uint64 LE                     header length in bytes
    header                        UTF-8 JSON (sorted keys)
    array data                    little-endian float64, in header order

Arrays are stored as raw float64 so a load/save cycle is bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classify import LinearModel
from .config import PipelineConfig
from .detector import BackgroundStats, TripletDetector
from .errors import DataError, FormatVersionError
from .geometry import GeometryConfig, TriangleSignature
from .imaging import PatchLocation
from .mining import MinedTriplet

MAGIC = b"TRIPMDL\0"
FORMAT_VERSION = 1


@dataclass
class ModelFile:
    config: PipelineConfig
    class_names: list[str]
    background: BackgroundStats
    triplets: list[MinedTriplet]
    linear: LinearModel | None = None
    report: dict = field(default_factory=dict)


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype="<f8"))


def to_bytes(model: ModelFile) -> bytes:
    arrays: list[tuple[str, np.ndarray]] = [
        ("background.mu", _f64(model.background.mu)),
        ("background.sigma", _f64(model.background.sigma)),
    ]
    t = model.triplets
    dim = model.background.dim
    if t:
        arrays += [
            ("triplets.weights", _f64([m.detector.weights for m in t])),
            ("triplets.cosines", _f64([m.detector.signature.cosines for m in t])),
            ("triplets.signs", _f64([m.detector.signature.order_sign for m in t])),
            ("triplets.labels", _f64([m.detector.class_label for m in t])),
            ("triplets.entropy", _f64([m.entropy for m in t])),
            ("triplets.mean_top_score", _f64([m.mean_top_score for m in t])),
            ("triplets.candidate_id", _f64([m.candidate_id for m in t])),
            ("triplets.eta", _f64([[m.detector.geometry.eta_o, m.detector.geometry.eta_s,
                                     m.detector.geometry.degeneracy_eps] for m in t])),
            ("triplets.locations", _f64([[[l.x, l.y, l.side] for l in (m.locations or ())] or
                                         [[-1, -1, -1]] * 3 for m in t])),
        ]
    else:
        arrays.append(("triplets.weights", np.zeros((0, 3, dim), dtype="<f8")))
    if model.linear is not None:
        lm = model.linear
        arrays += [
            ("linear.weights", _f64(lm.weights)),
            ("linear.biases", _f64(lm.biases)),
            ("linear.classes", _f64(lm.classes)),
            ("linear.iterations", _f64(lm.iterations)),
        ]
    header = {
        "config": model.config.to_dict(),
        "class_names": list(model.class_names),
        "background": {"lam": model.background.lam, "count": model.background.count},
        "n_triplets": len(t),
        "linear": None if model.linear is None else {"c": model.linear.c, "seed": model.linear.seed},
        "report": model.report,
        "arrays": [],
    }
    offset = 0
    for name, arr in arrays:
        header["arrays"].append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(head)), head]
    parts += [arr.tobytes() for _, arr in arrays]
    return b"".join(parts)


def from_bytes(data: bytes) -> ModelFile:
    if data[: len(MAGIC)] != MAGIC:
        raise DataError("not a triplet model file")
    pos = len(MAGIC)
    version, hlen = struct.unpack_from("<IQ", data, pos)
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"model format version {version}, expected {FORMAT_VERSION}")
    pos += struct.calcsize("<IQ")
    header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    base = pos + hlen
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + spec["offset"]
        arrays[spec["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=start).reshape(shape).astype(np.float64)

    config = PipelineConfig.from_dict(header["config"])
    bg = BackgroundStats(
        arrays["background.mu"], arrays["background.sigma"], header["background"]["lam"], header["background"]["count"]
    )
    triplets = []
    for i in range(header["n_triplets"]):
        eta = arrays["triplets.eta"][i]
        sig = TriangleSignature(int(arrays["triplets.signs"][i]), tuple(float(c) for c in arrays["triplets.cosines"][i]))
        det = TripletDetector(
            arrays["triplets.weights"][i].copy(),
            sig,
            int(arrays["triplets.labels"][i]),
            GeometryConfig(float(eta[0]), float(eta[1]), float(eta[2])),
        )
        locs = arrays["triplets.locations"][i]
        locations = None if locs[0, 2] < 0 else tuple(PatchLocation(int(x), int(y), int(s)) for x, y, s in locs)
        triplets.append(
            MinedTriplet(
                det,
                float(arrays["triplets.entropy"][i]),
                float(arrays["triplets.mean_top_score"][i]),
                int(arrays["triplets.candidate_id"][i]),
                locations,
            )
        )
    linear = None
    if header["linear"] is not None:
        linear = LinearModel(
            arrays["linear.weights"],
            arrays["linear.biases"],
            arrays["linear.classes"].astype(np.int64),
            header["linear"]["c"],
            header["linear"]["seed"],
            arrays["linear.iterations"].astype(np.int64),
        )
    return ModelFile(config, header["class_names"], bg, triplets, linear, header["report"])


def save_model(path: str | Path, model: ModelFile) -> None:
    Path(path).write_bytes(to_bytes(model))


def load_model(path: str | Path) -> ModelFile:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    return from_bytes(data)
