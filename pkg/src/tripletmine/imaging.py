"""Image preprocessing and HOG patch features.

Images are plain 2-D ``float64`` numpy arrays (rows = y, columns = x) with
intensities in [0, 1].  Patch features are Dalal-Triggs HOG computed from
gradients of the *whole* image, so a patch feature extracted on its own is
identical to the corresponding slice of the dense feature grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InvalidRegionError, TooSmallError

MIN_SIDE = 64
LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class PatchLocation:
    """Square patch with top-left corner ``(x, y)``."""

    x: int
    y: int
    side: int

    @property
    def box(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.x + self.side, self.y + self.side)

    @property
    def center(self) -> tuple[float, float]:
        half = self.side / 2.0
        return (self.x + half, self.y + half)


@dataclass(frozen=True)
class HogConfig:
    cell: int = 8
    bins: int = 9
    block: int = 2
    eps: float = 1e-6
    clip: float = 0.2

    def feature_dim(self, side: int) -> int:
        """Dimension of the descriptor of a ``side`` x ``side`` patch."""
        n_cells = side // self.cell
        n_blocks = n_cells - self.block + 1
        if n_blocks < 1:
            raise TooSmallError(f"patch side {side} smaller than one block")
        return n_blocks * n_blocks * self.block * self.block * self.bins


@dataclass
class DenseFeatures:
    """HOG features at every sliding-window location of one image.

    ``features`` has shape ``(rows * cols, dim)``; window ``i`` sits at
    ``xs[i], ys[i]``.
    """

    features: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    rows: int
    cols: int
    side: int
    stride: int

    @property
    def boxes(self) -> np.ndarray:
        return np.stack([self.xs, self.ys, self.xs + self.side, self.ys + self.side], axis=1)

    @property
    def centers(self) -> np.ndarray:
        half = self.side / 2.0
        return np.stack([self.xs + half, self.ys + half], axis=1).astype(float)

    def location(self, i: int) -> PatchLocation:
        return PatchLocation(int(self.xs[i]), int(self.ys[i]), self.side)


def to_gray(pixels: np.ndarray) -> np.ndarray:
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., :3] @ np.asarray(LUMA)
    if arr.ndim != 2:
        raise InvalidRegionError(f"expected a 2-D image, got shape {arr.shape}")
    return arr


def load_image(path: str | Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return to_gray(arr)


def save_image(path: str | Path, image: np.ndarray) -> None:
    from PIL import Image

    data = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def resize(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resample with pixel-center alignment."""
    h, w = image.shape
    if (h, w) == (height, width):
        return image.copy()
    ys = (np.arange(height) + 0.5) * (h / height) - 0.5
    xs = (np.arange(width) + 0.5) * (w / width) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(image, [yy, xx], order=1, mode="nearest")


def preprocess(image: np.ndarray, bbox, target_width: int = 500) -> np.ndarray:
    """Crop ``bbox = (x, y, w, h)`` and rescale to ``target_width`` keeping aspect."""
    image = to_gray(image)
    if target_width < MIN_SIDE:
        raise TooSmallError(f"target_width {target_width} < {MIN_SIDE}")
    x, y, w, h = (int(round(v)) for v in bbox)
    H, W = image.shape
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > W or y + h > H:
        raise InvalidRegionError(f"bbox {bbox} outside {W}x{H} image")
    crop = image[y : y + h, x : x + w]
    out_h = int(round(h * target_width / w))
    if out_h < MIN_SIDE:
        raise TooSmallError(f"preprocessed height {out_h} < {MIN_SIDE}")
    return resize(crop, out_h, target_width)


def mirror(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, ::-1])


def mirror_boxes(boxes: np.ndarray, width: int) -> np.ndarray:
    """Map ``(x0, y0, x1, y1)`` boxes into the horizontally flipped frame."""
    boxes = np.asarray(boxes)
    out = boxes.copy()
    out[..., 0] = width - boxes[..., 2]
    out[..., 2] = width - boxes[..., 0]
    return out


def _gradients(region: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(region)
    gy = np.zeros_like(region)
    gx[:, 1:-1] = region[:, 2:] - region[:, :-2]
    gy[1:-1, :] = region[2:, :] - region[:-2, :]
    return gx, gy


def _cell_histograms(gx: np.ndarray, gy: np.ndarray, cfg: HogConfig) -> np.ndarray:
    h, w = gx.shape
    ncy, ncx = h // cfg.cell, w // cfg.cell
    gx = gx[: ncy * cfg.cell, : ncx * cfg.cell]
    gy = gy[: ncy * cfg.cell, : ncx * cfg.cell]
    mag = np.hypot(gx, gy)
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    bins = np.minimum((angle * (cfg.bins / 180.0)).astype(np.intp), cfg.bins - 1)
    hist = np.zeros((ncy * cfg.cell, ncx * cfg.cell, cfg.bins))
    np.put_along_axis(hist, bins[..., None], mag[..., None], axis=2)
    return hist.reshape(ncy, cfg.cell, ncx, cfg.cell, cfg.bins).sum(axis=(1, 3))


def _normalized_blocks(cells: np.ndarray, cfg: HogConfig) -> np.ndarray:
    """L2-Hys normalized blocks, shape ``(nby, nbx, block*block*bins)``."""
    ncy, ncx, nb = cells.shape
    nby, nbx = ncy - cfg.block + 1, ncx - cfg.block + 1
    if nby < 1 or nbx < 1:
        raise TooSmallError("region smaller than one HOG block")
    parts = [
        cells[dy : dy + nby, dx : dx + nbx]
        for dy in range(cfg.block)
        for dx in range(cfg.block)
    ]
    blocks = np.concatenate(parts, axis=2)
    eps2 = cfg.eps**2
    blocks = blocks / np.sqrt((blocks**2).sum(axis=2, keepdims=True) + eps2)
    blocks = np.minimum(blocks, cfg.clip)
    return blocks / np.sqrt((blocks**2).sum(axis=2, keepdims=True) + eps2)


def _padded_gradients(image: np.ndarray, x: int, y: int, w: int, h: int):
    """Gradients of ``image[y:y+h, x:x+w]`` using the surrounding pixels."""
    H, W = image.shape
    y0, y1 = max(y - 1, 0), min(y + h + 1, H)
    x0, x1 = max(x - 1, 0), min(x + w + 1, W)
    gx, gy = _gradients(image[y0:y1, x0:x1])
    sl = (slice(y - y0, y - y0 + h), slice(x - x0, x - x0 + w))
    return gx[sl], gy[sl]


def extract_hog(image: np.ndarray, loc: PatchLocation, cfg: HogConfig = HogConfig()) -> np.ndarray:
    H, W = image.shape
    if loc.side <= 0 or loc.x < 0 or loc.y < 0 or loc.x + loc.side > W or loc.y + loc.side > H:
        raise InvalidRegionError(f"patch {loc} outside {W}x{H} image")
    gx, gy = _padded_gradients(image, loc.x, loc.y, loc.side, loc.side)
    blocks = _normalized_blocks(_cell_histograms(gx, gy, cfg), cfg)
    return blocks.ravel()


def window_grid(height: int, width: int, side: int, stride: int) -> tuple[int, int]:
    """Number of (rows, cols) of sliding windows."""
    if height < side or width < side:
        raise TooSmallError(f"{width}x{height} image smaller than {side}px patch")
    return (height - side) // stride + 1, (width - side) // stride + 1


def dense_hog(
    image: np.ndarray, side: int = 64, stride: int = 8, cfg: HogConfig = HogConfig()
) -> DenseFeatures:
    """HOG of every ``side`` x ``side`` window on a ``stride`` grid."""
    H, W = image.shape
    rows, cols = window_grid(H, W, side, stride)
    ys, xs = np.meshgrid(np.arange(rows) * stride, np.arange(cols) * stride, indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()
    dim = cfg.feature_dim(side)
    if stride % cfg.cell or side % cfg.cell:
        feats = np.stack([extract_hog(image, PatchLocation(int(x), int(y), side), cfg) for x, y in zip(xs, ys)])
    else:
        gx, gy = _gradients(image)
        blocks = _normalized_blocks(_cell_histograms(gx, gy, cfg), cfg)
        nb = side // cfg.cell - cfg.block + 1
        step = stride // cfg.cell
        view = np.lib.stride_tricks.sliding_window_view(blocks, (nb, nb), axis=(0, 1))
        # view: (nby', nbx', blockdim, nb, nb) -> per window (nb, nb, blockdim)
        view = view[::step, ::step][:rows, :cols]
        feats = np.ascontiguousarray(view.transpose(0, 1, 3, 4, 2)).reshape(rows * cols, dim)
    return DenseFeatures(feats, xs, ys, rows, cols, side, stride)


def whole_image_descriptor(
    image: np.ndarray, cfg: HogConfig = HogConfig(), canonical: int = 128
) -> np.ndarray:
    """HOG of the image resampled to a ``canonical`` x ``canonical`` grid."""
    small = resize(image, canonical, canonical)
    gx, gy = _gradients(small)
    return _normalized_blocks(_cell_histograms(gx, gy, cfg), cfg).ravel()
