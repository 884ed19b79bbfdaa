import json
import struct

import numpy as np
import pytest

from tripletmine.classify import train_svm
from tripletmine.config import PipelineConfig
from tripletmine.detector import TripletDetector, fit_background
from tripletmine.errors import ConfigError, DataError, FormatVersionError
from tripletmine.geometry import GeometryConfig, TriangleSignature
from tripletmine.imaging import PatchLocation
from tripletmine.manifest import ManifestEntry, dump_manifest, load_manifest, parse_manifest
from tripletmine.mining import MinedTriplet
from tripletmine.modelfile import MAGIC, ModelFile, from_bytes, load_model, save_model, to_bytes


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.patch_side, cfg.stride, cfg.target_width, cfg.neighborhood_size) == (64, 8, 500, 20)
        assert (cfg.top_locations, cfg.triplets_per_class, cfg.k_top) == (6, 300, 5)
        assert (cfg.eta_o, cfg.eta_s, cfg.overlap_max) == (0.5, 1.0, 0.25)

    @pytest.mark.parametrize(
        "kw", [{"eta_o": 1.5}, {"eta_s": -0.1}, {"top_locations": 2}, {"patch_side": 8}, {"svm_c": 0.0},
               {"overlap_max": 2.0}, {"canonical_size": 32}]
    )
    def test_range_checks(self, kw):
        with pytest.raises(ConfigError):
            PipelineConfig(**kw)

    def test_dict_round_trip(self):
        cfg = PipelineConfig(patch_side=32, top_m=10, ridge=0.5)
        assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"patch_size": 64})


class TestManifest:
    text = (
        '{"bbox": [0, 0, 10, 20], "label": "a", "path": "x.png", "split": "train"}\n'
        '{"bbox": [1, 2, 3, 4], "distractors": [[1.5, 2]], "label": "b", "landmarks": [[1, 2], [3, 4]], '
        '"path": "y.png", "split": "test"}\n'
    )

    def test_parse_serialize_idempotent(self):
        once = dump_manifest(parse_manifest(self.text))
        assert once == self.text
        assert dump_manifest(parse_manifest(once)) == once

    def test_fields(self):
        a, b = parse_manifest(self.text)
        assert a.bbox == (0, 0, 10, 20) and a.landmarks is None
        assert b.split == "test" and b.landmarks == [[1, 2], [3, 4]]

    def test_comments_and_blank_lines(self):
        assert len(parse_manifest("# header\n\n" + self.text)) == 2

    @pytest.mark.parametrize(
        "line", ['{"path": "x", "label": "a"}', '{"path": "x", "label": "a", "bbox": [0, 0, 0, 1]}',
                 '{"path": "x", "label": "a", "bbox": [0, 0, 1, 1], "split": "val"}', "not json"]
    )
    def test_bad_lines(self, line):
        with pytest.raises(DataError):
            parse_manifest(line)

    def test_missing_paths(self, tmp_path):
        (tmp_path / "m.jsonl").write_text(self.text)
        with pytest.raises(DataError):
            load_manifest(tmp_path / "m.jsonl")
        assert load_manifest(tmp_path / "m.jsonl", check_paths=False)[0].resolved_path == tmp_path / "x.png"


def sample_model(rng, with_linear=True):
    stats = fit_background([rng.normal(size=(30, 6))])
    triplets = []
    for i in range(4):
        det = TripletDetector(rng.normal(size=(3, 6)), TriangleSignature(1 - 2 * (i % 2), tuple(rng.uniform(-1, 1, 3))),
                              i % 2, GeometryConfig(0.25 * i, 1.0 - 0.1 * i))
        locs = (PatchLocation(0, 8, 32), PatchLocation(16, 0, 32), PatchLocation(8, 24, 32))
        triplets.append(MinedTriplet(det, float(rng.random()), float(rng.normal()), i, locs if i else None))
    linear = train_svm(rng.normal(size=(10, 4)), [0, 1] * 5) if with_linear else None
    return ModelFile(PipelineConfig(patch_side=32), ["alpha", "beta"], stats, triplets, linear, {"n": 3})


class TestModelFile:
    def test_bit_exact_round_trip(self, rng, tmp_path):
        model = sample_model(rng)
        save_model(tmp_path / "m.bin", model)
        back = load_model(tmp_path / "m.bin")
        assert to_bytes(back) == to_bytes(model)
        np.testing.assert_array_equal(back.background.sigma, model.background.sigma)
        for a, b in zip(back.triplets, model.triplets):
            np.testing.assert_array_equal(a.detector.weights, b.detector.weights)
            assert a.detector.signature == b.detector.signature
            assert a.detector.geometry == b.detector.geometry
            assert (a.entropy, a.mean_top_score, a.candidate_id, a.locations) == (
                b.entropy, b.mean_top_score, b.candidate_id, b.locations)
        np.testing.assert_array_equal(back.linear.weights, model.linear.weights)
        assert back.class_names == ["alpha", "beta"] and back.config == model.config

    def test_without_linear(self, rng):
        model = sample_model(rng, with_linear=False)
        assert from_bytes(to_bytes(model)).linear is None

    def test_version_mismatch(self, rng):
        data = bytearray(to_bytes(sample_model(rng)))
        struct.pack_into("<I", data, len(MAGIC), 99)
        with pytest.raises(FormatVersionError):
            from_bytes(bytes(data))

    def test_bad_magic(self):
        with pytest.raises(DataError):
            from_bytes(b"NOTAMODEL" + bytes(20))
