"""Order and shape constraints on triangles of patch centers.

Coordinates are image coordinates: x to the right, y downward.  Scalar
functions operate on single triangles; the ``*_batch`` variants take arrays of
points with a trailing axis of size 2 and are what the detector uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateTriangleError

DEFAULT_EPS = 1e-6
MIN_VERTEX_DIST = 1e-6


@dataclass(frozen=True)
class GeometryConfig:
    eta_o: float = 0.5
    eta_s: float = 1.0
    degeneracy_eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not 0.0 <= self.eta_o <= 1.0:
            raise ConfigError(f"eta_o must lie in [0, 1], got {self.eta_o}")
        if not 0.0 <= self.eta_s <= 1.0:
            raise ConfigError(f"eta_s must lie in [0, 1], got {self.eta_s}")
        if not self.degeneracy_eps > 0:
            raise ConfigError("degeneracy_eps must be positive")


@dataclass(frozen=True)
class TriangleSignature:
    """Order sign and role-aligned vertex cosines (A, B, C) of a triangle."""

    order_sign: int
    cosines: tuple[float, float, float]

    @classmethod
    def from_points(cls, a, b, c, eps: float = DEFAULT_EPS) -> "TriangleSignature":
        return cls(order_sign(a, b, c, eps), triangle_angles(a, b, c))


def cross_z(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def order_sign(a, b, c, eps: float = DEFAULT_EPS) -> int:
    z = cross_z(a, b, c)
    if abs(z) <= eps:
        return 0
    return 1 if z > 0 else -1


def order_penalty(g_ref: int, g_cand: int, cfg: GeometryConfig) -> float:
    # undefined reference ordering is never penalized
    if g_ref == 0 or g_ref == g_cand:
        return 1.0
    return 1.0 - cfg.eta_o


def triangle_angles(a, b, c) -> tuple[float, float, float]:
    """Cosines of the interior angles at ``a``, ``b`` and ``c``."""
    pts = np.asarray([a, b, c], dtype=float)
    out = []
    for i in range(3):
        u = pts[(i + 1) % 3] - pts[i]
        v = pts[(i + 2) % 3] - pts[i]
        nu, nv = np.hypot(*u), np.hypot(*v)
        if nu < MIN_VERTEX_DIST or nv < MIN_VERTEX_DIST:
            raise DegenerateTriangleError(f"coincident vertices in {pts.tolist()}")
        out.append(float(np.clip(u @ v / (nu * nv), -1.0, 1.0)))
    return tuple(out)


def shape_penalty(angles_ref, angles_cand, cfg: GeometryConfig) -> float:
    diff = np.abs(np.asarray(angles_ref, dtype=float) - np.asarray(angles_cand, dtype=float))
    return float(1.0 - cfg.eta_s * diff.sum() / 6.0)


def cross_z_batch(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
        c[..., 0] - a[..., 0]
    )


def cosines_batch(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertex cosines, stacked on a new last axis, plus the shortest edge length."""
    ab, ac, bc = b - a, c - a, c - b
    lab = np.hypot(ab[..., 0], ab[..., 1])
    lac = np.hypot(ac[..., 0], ac[..., 1])
    lbc = np.hypot(bc[..., 0], bc[..., 1])
    shortest = np.minimum(np.minimum(lab, lac), lbc)
    with np.errstate(divide="ignore", invalid="ignore"):
        ca = (ab * ac).sum(-1) / (lab * lac)
        cb = (-ab * bc).sum(-1) / (lab * lbc)
        cc = (ac * bc).sum(-1) / (lac * lbc)
    cos = np.clip(np.stack([ca, cb, cc], axis=-1), -1.0, 1.0)
    return cos, shortest
