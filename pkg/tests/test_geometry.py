import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletmine.errors import ConfigError, DegenerateTriangleError
from tripletmine.geometry import (
    GeometryConfig,
    TriangleSignature,
    cosines_batch,
    cross_z,
    cross_z_batch,
    order_penalty,
    order_sign,
    shape_penalty,
    triangle_angles,
)

coord = st.floats(-1000, 1000, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord)
eta = st.floats(0.0, 1.0)


def law_of_cosines(a, b, c):
    """Vertex cosines from side lengths only; independent of the dot-product route."""
    la = math.dist(b, c)  # opposite a
    lb = math.dist(a, c)
    lc = math.dist(a, b)
    return (
        (lb**2 + lc**2 - la**2) / (2 * lb * lc),
        (la**2 + lc**2 - lb**2) / (2 * la * lc),
        (la**2 + lb**2 - lc**2) / (2 * la * lb),
    )


def well_formed(a, b, c):
    return abs(cross_z(a, b, c)) > 1e-3 * max(1.0, math.dist(a, b) * math.dist(a, c))


class TestOrderSign:
    def test_counterclockwise_in_image_frame(self):
        assert order_sign((0, 0), (2, 0), (1, 1)) == 1

    def test_swap_flips(self):
        assert order_sign((0, 0), (1, 1), (2, 0)) == -1

    def test_collinear_is_zero(self):
        assert order_sign((0, 0), (1, 1), (2, 2)) == 0

    def test_tiny_cross_product_is_zero(self):
        assert order_sign((0, 0), (1, 0), (2, 1e-7)) == 0

    @given(point, point, point)
    def test_antisymmetric_under_vertex_swap(self, a, b, c):
        assert order_sign(a, b, c) == -order_sign(a, c, b)

    @given(point, point, point)
    def test_cyclic_rotation_invariant(self, a, b, c):
        assert order_sign(a, b, c) == order_sign(b, c, a)

    @given(point, point, point, st.floats(-500, 500))
    def test_mirror_flips(self, a, b, c, axis):
        def m(p):
            return (2 * axis - p[0], p[1])

        if abs(cross_z(a, b, c)) > 1e-3:
            assert order_sign(m(a), m(b), m(c)) == -order_sign(a, b, c)

    def test_batch_matches_scalar(self, rng):
        pts = rng.uniform(-50, 50, size=(200, 3, 2))
        z = cross_z_batch(pts[:, 0], pts[:, 1], pts[:, 2])
        expect = [cross_z(*p) for p in pts]
        np.testing.assert_allclose(z, expect, rtol=1e-12)


class TestOrderPenalty:
    cfg = GeometryConfig(eta_o=0.5)

    def test_agree(self):
        assert order_penalty(1, 1, self.cfg) == 1.0

    def test_disagree(self):
        assert order_penalty(1, -1, self.cfg) == 0.5

    def test_undefined_reference(self):
        assert order_penalty(0, -1, self.cfg) == 1.0

    @given(eta, st.sampled_from([-1, 0, 1]), st.sampled_from([-1, 0, 1]))
    def test_bounds(self, e, g, h):
        p = order_penalty(g, h, GeometryConfig(eta_o=e))
        assert 1.0 - e - 1e-15 <= p <= 1.0


class TestTriangleAngles:
    def test_right_isosceles(self):
        np.testing.assert_allclose(triangle_angles((0, 0), (1, 0), (0, 1)), (0.0, math.sqrt(0.5), math.sqrt(0.5)), atol=1e-12)

    def test_equilateral(self):
        c = triangle_angles((0, 0), (1, 0), (0.5, math.sqrt(3) / 2))
        np.testing.assert_allclose(c, 0.5, atol=1e-12)

    def test_coincident_raises(self):
        with pytest.raises(DegenerateTriangleError):
            triangle_angles((1, 1), (1, 1), (3, 0))

    @given(point, point, point)
    def test_matches_law_of_cosines(self, a, b, c):
        if not well_formed(a, b, c):
            return
        np.testing.assert_allclose(triangle_angles(a, b, c), law_of_cosines(a, b, c), atol=1e-6)

    @given(point, point, point, st.floats(0.1, 10), st.floats(-math.pi, math.pi), point)
    def test_similarity_invariant(self, a, b, c, scale, theta, shift):
        if not well_formed(a, b, c):
            return
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])

        def t(p):
            return tuple(scale * rot @ np.asarray(p) + np.asarray(shift))

        np.testing.assert_allclose(triangle_angles(t(a), t(b), t(c)), triangle_angles(a, b, c), atol=1e-6)

    def test_batch_matches_scalar(self, rng):
        pts = rng.uniform(-50, 50, size=(200, 3, 2))
        cos, shortest = cosines_batch(pts[:, 0], pts[:, 1], pts[:, 2])
        np.testing.assert_allclose(cos, [triangle_angles(*p) for p in pts], atol=1e-12)
        edges = np.stack([np.linalg.norm(pts[:, i] - pts[:, j], axis=1) for i, j in ((0, 1), (0, 2), (1, 2))])
        np.testing.assert_allclose(shortest, edges.min(axis=0))


class TestShapePenalty:
    def test_identical_is_one(self):
        assert shape_penalty((0.1, 0.2, 0.3), (0.1, 0.2, 0.3), GeometryConfig()) == 1.0

    def test_equilateral_vs_right_isosceles(self):
        eq = triangle_angles((0, 0), (1, 0), (0.5, math.sqrt(3) / 2))
        ri = triangle_angles((0, 0), (1, 0), (0, 1))
        # oracle: angles 60/60/60 vs 90/45/45 in degrees
        oracle = 1 - (abs(0.5 - math.cos(math.pi / 2)) + 2 * abs(0.5 - math.cos(math.pi / 4))) / 6
        got = shape_penalty(eq, ri, GeometryConfig(eta_s=1.0))
        assert got == pytest.approx(oracle, abs=1e-12)
        assert got == pytest.approx(0.8476, abs=1e-4)

    @given(st.tuples(*[st.floats(-1, 1)] * 3), st.tuples(*[st.floats(-1, 1)] * 3), eta)
    def test_bounds_and_symmetry(self, u, v, e):
        cfg = GeometryConfig(eta_s=e)
        p = shape_penalty(u, v, cfg)
        assert 1.0 - e - 1e-12 <= p <= 1.0
        assert p == pytest.approx(shape_penalty(v, u, cfg), abs=1e-15)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"eta_o": -0.1}, {"eta_o": 1.5}, {"eta_s": 2.0}, {"degeneracy_eps": 0.0}])
    def test_rejects_out_of_range(self, kw):
        with pytest.raises(ConfigError):
            GeometryConfig(**kw)

    def test_signature_from_points(self):
        sig = TriangleSignature.from_points((0, 0), (2, 0), (1, 1))
        assert sig.order_sign == 1
        np.testing.assert_allclose(sig.cosines, (math.sqrt(0.5), math.sqrt(0.5), 0.0), atol=1e-12)
