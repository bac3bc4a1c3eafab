"""Image plumbing shared by the tracker and the verifier.

Frames are plain numpy arrays: ``(H, W)`` for gray or ``(H, W, 3)`` for RGB,
float64 in [0, 1].  Boxes use 0-based pixel coordinates with the top-left
corner at the origin of pixel (0, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ptav import _kernels

HOG_EPS = _kernels.HOG_EPS


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box {vals}")

    @classmethod
    def from_center(cls, cx, cy, w, h):
        return cls(float(cx - w / 2.0), float(cy - h / 2.0), float(w), float(h))

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def center(self) -> tuple[float, float]:
        return self.cx, self.cy

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def diagonal(self) -> float:
        return math.hypot(self.w, self.h)

    def shifted(self, dx, dy) -> BoundingBox:
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def scaled(self, factor) -> BoundingBox:
        """Same center, size multiplied by ``factor``."""
        return BoundingBox.from_center(self.cx, self.cy, self.w * factor, self.h * factor)

    def intersection_area(self, other: BoundingBox) -> float:
        iw = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        ih = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        return max(iw, 0.0) * max(ih, 0.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def frame_box(image) -> BoundingBox:
    return BoundingBox(0.0, 0.0, float(image.shape[1]), float(image.shape[0]))


def to_float_image(arr) -> np.ndarray:
    """Convert an 8-bit (or already float) array into a [0, 1] float64 frame."""
    arr = np.asarray(arr)
    if arr.dtype == np.uint8:
        out = arr.astype(np.float64) / 255.0
    else:
        out = np.clip(arr.astype(np.float64), 0.0, 1.0)
    if out.ndim == 3 and out.shape[2] == 1:
        out = out[:, :, 0]
    if out.ndim == 3 and out.shape[2] == 4:
        out = out[:, :, :3]
    if out.ndim not in (2, 3) or (out.ndim == 3 and out.shape[2] != 3):
        raise ValueError(f"unsupported image shape {arr.shape}")
    return out


def check_image(image):
    if image.ndim not in (2, 3) or (image.ndim == 3 and image.shape[2] != 3):
        raise ValueError(f"image must be HxW or HxWx3, got {image.shape}")
    if image.size == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(image)) or image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must be finite and within [0, 1]")


def to_gray(image) -> np.ndarray:
    """Luma conversion; works on single images and on stacks (..., 3)."""
    if image.ndim >= 3 and image.shape[-1] == 3:
        return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114
    return image


def crop_resize_many(image, boxes, out_size) -> np.ndarray:
    """Bilinear crop-and-resize of several boxes to one canonical size.

    Returns an array of shape ``(N, out_h, out_w[, C])``.  Samples falling
    outside the image replicate the nearest edge pixel.  Output pixel ``i``
    samples the source at ``start + (i + 0.5) * extent / n_out - 0.5``;
    interpolation runs vertically first, then horizontally, and a batch is
    bit-identical to cropping each box on its own.
    """
    frame = frame_box(image)
    for b in boxes:
        if b.intersection_area(frame) <= 0.0:
            raise ValueError("box outside frame")
    return _kernels.crop_resize(image, boxes, out_size)


def crop_resize(image, box: BoundingBox, out_size) -> np.ndarray:
    """Cut ``box`` out of ``image`` and resample it to ``out_size`` = (w, h)."""
    return crop_resize_many(image, [box], out_size)[0]


def hog_many(patches, cell_size=4, n_orientations=9) -> np.ndarray:
    """Cell HOG for a stack of gray patches ``(N, H, W)`` -> ``(N, cy, cx, n)``.

    Unsigned orientations with bin centers at ``k * pi / n``, linear vote
    splitting between neighbouring bins, and L2 normalization of every cell
    by the energy of its 3x3 cell neighbourhood (zero beyond the border).
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 3:
        raise ValueError("expected a stack of gray patches (N, H, W)")
    n, H, W = patches.shape
    if cell_size > H or cell_size > W:
        raise ValueError(f"cell_size {cell_size} exceeds patch side {min(H, W)}")
    if H % cell_size or W % cell_size:
        raise ValueError(f"patch {W}x{H} not divisible by cell_size {cell_size}")
    return _kernels.hog(patches, cell_size, n_orientations)


def compute_hog(patch, cell_size=4, n_orientations=9) -> np.ndarray:
    return hog_many(to_gray(patch)[None], cell_size, n_orientations)[0]


def color_bin_index(image, bins) -> np.ndarray:
    """Per-pixel joint color bin index (gray images use intensity bins)."""
    q = np.minimum((image * bins).astype(np.intp), bins - 1)
    if image.ndim >= 3 and image.shape[-1] == 3:
        return (q[..., 0] * bins + q[..., 1]) * bins + q[..., 2]
    return q


def n_color_bins(channels, bins) -> int:
    return bins**3 if channels == 3 else bins


def color_histograms(patches, bins) -> np.ndarray:
    """Normalized joint color histograms for a stack of patches."""
    patches = np.asarray(patches)
    n = patches.shape[0]
    rgb = patches.ndim == 4
    length = n_color_bins(3 if rgb else 1, bins)
    idx = color_bin_index(patches, bins).reshape(n, -1)
    idx = idx + (np.arange(n) * length)[:, None]
    counts = np.bincount(idx.ravel(), minlength=n * length).reshape(n, length)
    return counts / idx.shape[1]


def compute_color_histogram(patch, bins_per_channel) -> np.ndarray:
    if bins_per_channel < 2:
        raise ValueError("bins_per_channel must be >= 2")
    return color_histograms(np.asarray(patch)[None], bins_per_channel)[0]


def integral_image(plane) -> np.ndarray:
    """Summed-area table with a leading zero row and column: shape (H+1, W+1)."""
    plane = np.asarray(plane, dtype=np.float64)
    ii = np.zeros((plane.shape[0] + 1, plane.shape[1] + 1))
    np.cumsum(np.cumsum(plane, axis=0), axis=1, out=ii[1:, 1:])
    return ii


def box_sum(ii, box) -> float:
    """Sum of the pixels in an integer box ``(x, y, w, h)``."""
    x, y, w, h = (int(v) for v in box)
    if (x, y, w, h) != tuple(box):
        raise ValueError(f"box_sum needs integer coordinates, got {box}")
    if x < 0 or y < 0 or w < 0 or h < 0 or y + h >= ii.shape[0] or x + w >= ii.shape[1]:
        raise ValueError(f"box {box} outside integral image {ii.shape}")
    return float(ii[y + h, x + w] - ii[y, x + w] - ii[y + h, x] + ii[y, x])


def box_mean_map(plane, bw, bh) -> np.ndarray:
    """Mean over every fully contained ``bw x bh`` window; shape (H-bh+1, W-bw+1)."""
    ii = integral_image(plane)
    s = ii[bh:, bw:] - ii[:-bh, bw:] - ii[bh:, :-bw] + ii[:-bh, :-bw]
    return s / (bw * bh)
