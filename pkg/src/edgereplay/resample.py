"""Image resampling: Lanczos-3, pixel-area, bilinear, and nearest for bit maps.

All RGB resamplers are separable and built from per-axis weight matrices,
so a resize is two small matrix products per channel. Pixel centres map as
src = (dst + 0.5) * (src_dim / dst_dim) - 0.5. Lanczos widens its kernel by
the scale factor when shrinking (antialias); area uses exact fractional
coverage of each target cell. Output samples are clamped to [0, 255] and
rounded half-up.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .images import BitEdgeMap, RgbImage

LANCZOS_A = 3


def _lanczos_kernel(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    out = np.sinc(x) * np.sinc(x / LANCZOS_A)
    return np.where(ax < LANCZOS_A, out, 0.0)


def _lanczos_weights(src: int, dst: int) -> np.ndarray:
    scale = src / dst
    fscale = max(scale, 1.0)
    support = LANCZOS_A * fscale
    w = np.zeros((dst, src))
    for i in range(dst):
        center = (i + 0.5) * scale - 0.5
        lo = max(0, math.ceil(center - support))
        hi = min(src - 1, math.floor(center + support))
        taps = np.arange(lo, hi + 1)
        weights = _lanczos_kernel((taps - center) / fscale)
        total = weights.sum()
        if total == 0.0:  # degenerate window, fall back to nearest source pixel
            nearest = min(src - 1, max(0, int(round(center))))
            w[i, nearest] = 1.0
        else:
            w[i, taps] = weights / total
    return w


def _area_weights(src: int, dst: int) -> np.ndarray:
    scale = src / dst
    w = np.zeros((dst, src))
    for i in range(dst):
        left = i * scale
        right = (i + 1) * scale
        lo = int(math.floor(left))
        hi = min(src - 1, int(math.ceil(right)) - 1)
        for k in range(lo, hi + 1):
            overlap = min(right, k + 1) - max(left, k)
            if overlap > 0:
                w[i, k] = overlap
        w[i] /= w[i].sum()
    return w


def _bilinear_weights(src: int, dst: int) -> np.ndarray:
    scale = src / dst
    w = np.zeros((dst, src))
    for i in range(dst):
        center = (i + 0.5) * scale - 0.5
        j0 = math.floor(center)
        t = center - j0
        for j, weight in ((j0, 1.0 - t), (j0 + 1, t)):
            if weight:
                w[i, min(src - 1, max(0, j))] += weight
    return w


_WEIGHT_BUILDERS = {
    "lanczos": _lanczos_weights,
    "area": _area_weights,
    "bilinear": _bilinear_weights,
}

RESIZE_METHODS = tuple(_WEIGHT_BUILDERS)


def resize_rgb(img: RgbImage, height: int, width: int, method: str = "lanczos") -> RgbImage:
    """Resample to height x width; channels are processed independently."""
    if height < 1 or width < 1:
        raise ValidationError("target dimensions must be >= 1")
    if method not in _WEIGHT_BUILDERS:
        raise ValidationError(f"unknown resize method {method!r}, expected one of {RESIZE_METHODS}")
    build = _WEIGHT_BUILDERS[method]
    wy = build(img.height, height)
    wx = build(img.width, width)
    data = img.pixels.astype(np.float64)
    out = np.tensordot(wy, data, axes=(1, 0))  # (H, w, 3)
    out = np.tensordot(wx, out, axes=(1, 1)).transpose(1, 0, 2)  # (H, W, 3)
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return RgbImage(height, width, out)


def resize_edges_nearest(edges: BitEdgeMap, height: int, width: int) -> BitEdgeMap:
    """Nearest-neighbour resize; target (i, j) copies the source pixel under
    its centre: (floor((i+0.5)*h/H), floor((j+0.5)*w/W))."""
    if height < 1 or width < 1:
        raise ValidationError("target dimensions must be >= 1")
    mask = edges.to_mask()
    # Integer-exact pixel-centre mapping: floor(((2i+1)*h) / (2H)).
    src_i = ((2 * np.arange(height, dtype=np.int64) + 1) * edges.height) // (2 * height)
    src_j = ((2 * np.arange(width, dtype=np.int64) + 1) * edges.width) // (2 * width)
    return BitEdgeMap.from_mask(mask[np.ix_(src_i, src_j)])
