import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dense
from oracles import brute_force_triplet, greedy_nms, toy_instance
from tripletmine.detector import (
    NO_DETECTION,
    CovarianceAccumulator,
    DetectorBank,
    ImageFeatures,
    TripletDetector,
    bank_max_responses,
    detect_triplet,
    detect_with_mirror,
    fit_background,
    iou_matrix,
    lda_weights,
    nms_indices,
    score_grid,
    top_k_nms,
)
from tripletmine.errors import InsufficientDataError, ShapeError
from tripletmine.geometry import GeometryConfig, TriangleSignature
from tripletmine.imaging import PatchLocation, dense_hog, extract_hog, mirror


def random_spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + d * np.eye(d)


def detector_for(weights, tri, eta_o=0.5, eta_s=1.0, label=0):
    return TripletDetector(weights, TriangleSignature.from_points(*tri), label, GeometryConfig(eta_o, eta_s))


class TestBackground:
    def test_two_points(self):
        s = fit_background([np.array([[0.0, 0.0], [2.0, 2.0]])], lam=0.0)
        np.testing.assert_allclose(s.mu, [1, 1])
        np.testing.assert_allclose(s.sigma, [[1, 1], [1, 1]])

    def test_identical_patches_give_ridge(self):
        s = fit_background([np.ones((5, 3))], lam=0.1)
        np.testing.assert_allclose(s.sigma, 0.1 * np.eye(3))

    def test_needs_two(self):
        with pytest.raises(InsufficientDataError):
            fit_background([np.ones(4)])

    def test_default_ridge(self, rng):
        x = rng.normal(size=(200, 6))
        s = fit_background([x])
        cov = np.cov(x.T, bias=True)
        assert s.lam == pytest.approx(0.01 * np.trace(cov) / 6)
        np.testing.assert_allclose(s.sigma, cov + s.lam * np.eye(6), atol=1e-12)

    def test_streaming_matches_batch(self, rng):
        x = rng.normal(size=(301, 7)) * 3 + 5
        whole = fit_background([x], lam=0.0)
        chunks = fit_background([x[:1], x[1:50], x[50:51], x[51:]], lam=0.0)
        np.testing.assert_allclose(chunks.mu, x.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(chunks.sigma, np.cov(x.T, bias=True), atol=1e-10)
        np.testing.assert_allclose(chunks.sigma, whole.sigma, atol=1e-10)

    def test_merge(self, rng):
        x = rng.normal(size=(100, 4))
        a = CovarianceAccumulator().update(x[:30])
        b = CovarianceAccumulator().update(x[30:])
        np.testing.assert_allclose(a.merge(b).finalize(0.0).sigma, np.cov(x.T, bias=True), atol=1e-12)


class TestLda:
    @pytest.mark.parametrize("scale", [1.0, 2.0])
    def test_scaled_identity(self, scale):
        s = fit_background([np.zeros((2, 3))], lam=0.0)
        s.sigma, s.mu = scale * np.eye(3), np.zeros(3)
        np.testing.assert_allclose(lda_weights(np.ones(3), s), np.ones(3) / scale)

    def test_diagonal(self):
        s = fit_background([np.zeros((2, 3))], lam=0.0)
        s.sigma, s.mu = np.diag([1.0, 2.0, 4.0]), np.zeros(3)
        np.testing.assert_allclose(lda_weights(np.array([1.0, 2.0, 4.0]), s), [1, 1, 1])

    def test_random_spd_residual(self, rng):
        for d in (3, 17, 64):
            x = rng.normal(size=(4 * d, d)) @ rng.normal(size=(d, d))
            s = fit_background([x], lam=0.05)
            t = rng.normal(size=d)
            w = lda_weights(t, s)
            assert np.linalg.norm(s.sigma @ w - (t - s.mu)) <= 1e-6 * np.linalg.norm(t - s.mu)

    def test_stack_matches_single(self, rng):
        s = fit_background([rng.normal(size=(50, 5))])
        t = rng.normal(size=(4, 5))
        np.testing.assert_allclose(lda_weights(t, s), np.stack([lda_weights(r, s) for r in t]), atol=1e-12)

    def test_dim_mismatch(self, rng):
        s = fit_background([rng.normal(size=(10, 5))])
        with pytest.raises(ShapeError):
            lda_weights(np.zeros(4), s)


class TestScoreGrid:
    def test_zero_weights(self, rng):
        np.testing.assert_array_equal(score_grid(rng.random((100, 120)), np.zeros(1764)), 0.0)

    def test_shape(self):
        assert score_grid(np.zeros((300, 500)), np.zeros(1764)).shape == (30, 55)

    def test_matches_extract(self, rng):
        img = rng.random((96, 112))
        w = rng.normal(size=1764)
        grid = score_grid(img, w)
        for r in range(grid.shape[0]):
            for c in range(grid.shape[1]):
                assert grid[r, c] == pytest.approx(extract_hog(img, PatchLocation(8 * c, 8 * r, 64)) @ w, abs=1e-9)


class TestNms:
    def test_single_peak(self):
        m = np.zeros((5, 5))
        m[2, 3] = 1.0
        (loc, s), *_ = top_k_nms(m, 1)
        assert (loc.x, loc.y, s) == (24, 16, 1.0)

    def test_neighbour_overlap(self):
        iou = iou_matrix(np.array([[0, 0, 64, 64], [8, 0, 72, 64]]))
        assert iou[0, 1] == pytest.approx(56 * 64 / (2 * 64 * 64 - 56 * 64))

    def test_adjacent_windows_suppressed(self):
        m = np.zeros((1, 10))
        m[0, 4], m[0, 5] = 2.0, 1.9
        picks = top_k_nms(m, 2, 0.25)
        assert picks[0][0].x == 32 and abs(picks[1][0].x - 32) >= 40

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(10, 10))
        got = top_k_nms(m, 6, 0.25, side=64, stride=8)
        xs, ys = np.meshgrid(np.arange(10) * 8, np.arange(10) * 8)
        boxes = np.stack([xs.ravel(), ys.ravel(), xs.ravel() + 64, ys.ravel() + 64], axis=1)
        ref = greedy_nms(m.ravel(), boxes, 6, 0.25)
        assert [(l.x, l.y) for l, _ in got] == [(boxes[i, 0], boxes[i, 1]) for i in ref]

    def test_ties_prefer_lower_index(self):
        picks = nms_indices(np.zeros((1, 4)), np.eye(4), 2, 0.5)
        np.testing.assert_array_equal(picks, [[0, 1]])

    def test_padding(self):
        picks = nms_indices(np.ones((1, 2)), np.ones((2, 2)), 3, 0.5)
        np.testing.assert_array_equal(picks, [[0, -1, -1]])


class TestDetectTriplet:
    def test_appearance_only_is_sum_of_top_scores(self, rng):
        xs, ys, side, feats, weights, tri = toy_instance(rng, 8)
        dense = make_dense(feats, xs, ys, side)
        det = detect_triplet(dense, detector_for(weights, tri, 0.0, 0.0), k=8, overlap_max=0.0)
        s = weights @ feats.T
        i, j, l = (np.argmax(r) for r in s)
        if len({i, j, l}) == 3:
            assert det.total == pytest.approx(s[0, i] + s[1, j] + s[2, l])

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_exhaustive_search(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 9))
        overlapping = seed % 2 == 1
        xs, ys, side, feats, weights, tri = toy_instance(rng, n, overlapping=overlapping)
        overlap = 1.0 if overlapping else 0.0
        eo, es = rng.uniform(0, 1, 2)
        det = detector_for(weights, tri, eo, es)
        got = detect_triplet(make_dense(feats, xs, ys, side), det, k=n, overlap_max=overlap)
        boxes = np.stack([xs, ys, xs + side, ys + side], axis=1)
        best, arg = brute_force_triplet(weights @ feats.T, boxes, det.signature.order_sign,
                                        det.signature.cosines, eo, es, overlap)
        assert got.total == best
        if arg is not None:
            assert [(l.x, l.y) for l in got.locations] == [(xs[i], ys[i]) for i in arg]

    def test_no_valid_triplet(self):
        # three collinear windows
        dense = make_dense(np.eye(3), [0, 16, 32], [0, 0, 0], 16)
        det = detect_triplet(dense, detector_for(np.eye(3), [(0, 0), (1, 0), (0, 1)]), k=3, overlap_max=0.0)
        assert det.total == NO_DETECTION and not det.found

    def test_reversed_arrangement_halves_score(self):
        # positive scores everywhere; the detector's reference is the mirror image
        feats = np.eye(3) * 5 + 1
        xs, ys = [0, 32, 0], [0, 0, 32]
        dense = make_dense(feats, xs, ys, 16)
        w = np.eye(3)
        centers = [(8, 8), (40, 8), (8, 40)]
        same = detector_for(w, centers, 0.5, 0.0)
        flipped = detector_for(w, [(-x, y) for x, y in centers], 0.5, 0.0)
        a = detect_triplet(dense, same, k=1, overlap_max=0.0)
        b = detect_triplet(dense, flipped, k=1, overlap_max=0.0)
        assert a.total == pytest.approx(18.0)
        assert b.total == pytest.approx(0.5 * a.total)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_penalty_monotone_for_positive_scores(self, seed, eo1, eo2, es1, es2):
        rng = np.random.default_rng(seed)
        xs, ys, side, feats, weights, tri = toy_instance(rng, 6)
        feats = np.abs(feats)
        weights = np.abs(weights)
        dense = make_dense(feats, xs, ys, side)
        lo_o, hi_o = sorted((eo1, eo2))
        lo_s, hi_s = sorted((es1, es2))
        t = [
            detect_triplet(dense, detector_for(weights, tri, eo, es), k=6, overlap_max=0.0).total
            for eo, es in ((0, 0), (lo_o, lo_s), (hi_o, hi_s))
        ]
        assert t[0] >= t[1] - 1e-12 >= t[2] - 2e-12


class TestMirror:
    def test_symmetric_image_keeps_unmirrored(self, rng):
        half = rng.random((96, 64))
        img = np.hstack([half, half[:, ::-1]])
        det = detector_for(rng.normal(size=(3, 1764)), [(0, 0), (50, 0), (0, 40)])
        out = detect_with_mirror(img, det, k=3)
        assert not out.mirrored
        assert out.total == detect_triplet(img, det, k=3).total

    def test_invariant_to_input_mirror(self, rng):
        img = rng.random((96, 128))
        det = detector_for(rng.normal(size=(3, 1764)), [(0, 0), (50, 0), (10, 40)])
        a = detect_with_mirror(img, det, k=3)
        b = detect_with_mirror(mirror(img), det, k=3)
        assert a.total == pytest.approx(b.total, abs=1e-9)

    def test_planted_mirror_found(self, rng):
        img = rng.random((128, 192)) * 0.05
        locs = [PatchLocation(0, 0, 64), PatchLocation(120, 8, 64), PatchLocation(24, 64, 64)]
        for i, l in enumerate(locs):
            img[l.y + 12 : l.y + 52, l.x + 10 + 6 * i : l.x + 20 + 9 * i] = 1.0
        w = np.stack([extract_hog(img, l) for l in locs])
        det = detector_for(w, [l.center for l in locs], 0.5, 1.0)
        out = detect_with_mirror(mirror(img), det, k=5)
        assert out.mirrored
        assert [(l.x, l.y) for l in out.locations] == [(192 - l.x - 64, l.y) for l in locs]
        direct = detect_triplet(img, det, k=5)
        assert out.total == pytest.approx(direct.total, rel=1e-9)

    def test_bank_matches_single(self, rng):
        img = rng.random((112, 128))
        dets = [detector_for(rng.normal(size=(3, 1764)), rng.uniform(0, 60, (3, 2)).tolist()) for _ in range(5)]
        got = bank_max_responses(DetectorBank(dets), ImageFeatures(img), chunk=2)
        ref = [detect_with_mirror(img, d).total for d in dets]
        np.testing.assert_allclose(got, ref, rtol=1e-10)
