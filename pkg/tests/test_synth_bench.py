import numpy as np
import pytest

from tripletmine.bench import MODES, localization_benchmark, pool_boxes
from tripletmine.synth import SynthSpec, generate, write_corpus

SMALL = dict(n_classes=3, train_per_class=4, test_per_class=2, size=128)


def arrays(items):
    return ([s.image for s in items], [s.label for s in items], [s.landmarks for s in items],
            [s.distractors for s in items])


class TestSynth:
    def test_deterministic(self):
        a, b = generate(SynthSpec(**SMALL, seed=5)), generate(SynthSpec(**SMALL, seed=5))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.image, y.image)
            np.testing.assert_array_equal(x.landmarks, y.landmarks)

    def test_seed_changes_corpus(self):
        a, b = generate(SynthSpec(**SMALL, seed=1)), generate(SynthSpec(**SMALL, seed=2))
        assert not np.array_equal(a[0].image, b[0].image)

    def test_zero_jitter_identical_within_class(self):
        spec = SynthSpec(**SMALL, position_jitter=0, rotation_jitter=0, noise=0, n_distractors=0)
        items = generate(spec)
        for c in range(3):
            imgs = [s.image for s in items if s.label == c]
            for img in imgs[1:]:
                np.testing.assert_array_equal(img, imgs[0])

    def test_layout(self):
        items = generate(SynthSpec(**SMALL))
        assert len(items) == 3 * 6
        assert sum(s.split == "train" for s in items) == 12
        s = items[0]
        assert s.image.shape == (128, 128) and 0 <= s.image.min() and s.image.max() <= 1
        assert s.landmarks.shape == (3 + 8, 2) and s.distractors.shape == (2, 2)

    def test_write_corpus(self, tmp_path):
        from tripletmine.manifest import load_manifest

        manifest = write_corpus(SynthSpec(**SMALL), tmp_path)
        entries = load_manifest(manifest)
        assert len(entries) == 18
        assert {e.label for e in entries} == {"class00", "class01", "class02"}
        assert (tmp_path / "synth_spec.json").exists()


class TestBench:
    def test_pool_boxes_stay_inside(self):
        b = pool_boxes(np.array([[2.0, 2.0], [126.0, 60.0]]), 32, 128, 128)
        np.testing.assert_array_equal(b, [[0, 0, 32, 32], [96, 44, 128, 76]])

    def test_zero_jitter_is_perfect(self):
        spec = SynthSpec(**SMALL, position_jitter=0, rotation_jitter=0, noise=0, n_distractors=0)
        res = localization_benchmark(*arrays(generate(spec)), n_pairs=20, n_triplets=10)
        np.testing.assert_array_equal(res.accuracy, 1.0)

    def test_disabled_penalties_equal_appearance_only(self):
        data = arrays(generate(SynthSpec(**SMALL)))
        modes = {MODES[0]: (0.0, 0.0), "eta zero": (0.0, 0.0), MODES[3]: (0.5, 1.0)}
        res = localization_benchmark(*data, n_pairs=30, n_triplets=20, modes=modes)
        assert res.accuracy[0] == res.accuracy[1]
        default = localization_benchmark(*data, n_pairs=30, n_triplets=20)
        assert default.accuracy[0] == res.accuracy[0]
        assert default.accuracy[3] == res.accuracy[2]

    def test_rows(self):
        data = arrays(generate(SynthSpec(**SMALL)))
        res = localization_benchmark(*data, n_pairs=10, n_triplets=5)
        rows = res.rows()
        assert [r[0] for r in rows] == list(MODES)
        assert rows[0][2] == pytest.approx(0.0) or np.isnan(rows[0][2])
