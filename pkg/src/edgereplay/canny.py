"""Edge detection: grayscale, Gaussian blur, Sobel, NMS, hysteresis.

The whole decision path is evaluated in exact integer arithmetic so that
any faithful implementation of the contract below produces bit-identical
edge maps, regardless of vectorisation or summation order:

* luma        = (299*R + 587*G + 114*B + 500) // 1000
* blur        = integer kernel W (5x5, sigma 1.4, scaled by 65536 and
                rounded half-up after normalisation); blurred numerator
                B = sum(W * luma) carries an implicit denominator
                DEN = sum(W). Borders use reflect-101 padding.
* gradients   = 3x3 Sobel on B (reflect-101), same denominator.
* magnitude   = compared via gx^2 + gy^2 (int64); thresholds t in luma
                units enter as ceil((t * DEN)^2).
* direction   = 4 axes {0deg, 45deg, 90deg, 135deg} with rows increasing
                downward (45deg runs down-right); the 22.5deg bin
                boundary is the rational 27146/65536, so bin membership
                is an integer comparison.
* NMS         = a pixel survives iff its squared magnitude is strictly
                greater than the earlier neighbour along the gradient
                axis and >= the later one (out-of-bounds counts as 0);
                equal-magnitude ridge pairs keep the earlier pixel.
* thresholds  = strong iff m >= high, weak iff low <= m < high.
* hysteresis  = strong pixels plus weak pixels 8-connected to them.

Images smaller than the 5x5 blur kernel are zero-padded (centred, extra
on the bottom/right), processed, and cropped back.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .images import BitEdgeMap, GradientField, GrayImage, RgbImage

KERNEL_SIZE = 5
SIGMA = 1.4
KERNEL_SCALE = 65536
# Rational stand-in for tan(22.5 deg) ~= 0.4142136; defines the direction bins.
TAN_NUM = 27146
TAN_DEN = 65536

DEFAULT_LOW = 100.0
DEFAULT_HIGH = 200.0


def _build_kernel() -> tuple[np.ndarray, int]:
    r = KERNEL_SIZE // 2
    g = [
        [math.exp(-(di * di + dj * dj) / (2.0 * SIGMA * SIGMA)) for dj in range(-r, r + 1)]
        for di in range(-r, r + 1)
    ]
    total = 0.0
    for row in g:
        for v in row:
            total += v
    w = [[int(math.floor(KERNEL_SCALE * v / total + 0.5)) for v in row] for row in g]
    den = sum(sum(row) for row in w)
    return np.array(w, dtype=np.int64), den


GAUSS_W, GAUSS_DEN = _build_kernel()

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.int64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.int64)

# NMS neighbour offsets per direction bin: (earlier, later) along the axis.
_NMS_NEIGHBOURS = {
    0: ((0, -1), (0, 1)),
    1: ((-1, -1), (1, 1)),
    2: ((-1, 0), (1, 0)),
    3: ((-1, 1), (1, -1)),
}


def to_grayscale(img: RgbImage) -> GrayImage:
    """BT.601 luma, rounded half-up."""
    p = img.pixels.astype(np.int64)
    luma = (299 * p[:, :, 0] + 587 * p[:, :, 1] + 114 * p[:, :, 2] + 500) // 1000
    return GrayImage(img.height, img.width, luma.astype(np.uint8))


def _convolve_int(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Integer 2-D convolution with reflect-101 borders (correlation form)."""
    r = kernel.shape[0] // 2
    padded = np.pad(arr, r, mode="reflect")
    out = np.zeros_like(arr)
    h, w = arr.shape
    for di in range(kernel.shape[0]):
        for dj in range(kernel.shape[1]):
            k = kernel[di, dj]
            if k:
                out += k * padded[di : di + h, dj : dj + w]
    return out


def _blur_numerator(luma: np.ndarray) -> np.ndarray:
    return _convolve_int(luma.astype(np.int64), GAUSS_W)


def _direction_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # Fold into the gy >= 0 half-plane; opposite gradients share an axis.
    flip = (gy < 0) | ((gy == 0) & (gx < 0))
    fx = np.where(flip, -gx, gx)
    fy = np.where(flip, -gy, gy)
    a = np.abs(fx)
    bins = np.where(fx > 0, np.uint8(1), np.uint8(3))
    bins = np.where(fy * TAN_DEN < a * TAN_NUM, np.uint8(0), bins)
    bins = np.where(a * TAN_DEN < fy * TAN_NUM, np.uint8(2), bins)
    bins = np.where((fx == 0) & (fy == 0), np.uint8(0), bins)
    return bins.astype(np.uint8)


def _gradients_raw(luma: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    blurred = _blur_numerator(luma)
    gx = _convolve_int(blurred, _SOBEL_X)
    gy = _convolve_int(blurred, _SOBEL_Y)
    return gx, gy, gx * gx + gy * gy


def compute_gradients(img: RgbImage) -> GradientField:
    """Blurred Sobel gradients in luma units with quantized directions."""
    luma = to_grayscale(img).samples
    gx, gy, mag2 = _gradients_raw(luma)
    magnitude = np.sqrt(mag2.astype(np.float64)) / GAUSS_DEN
    return GradientField(img.height, img.width, magnitude, _direction_bins(gx, gy))


def _shifted(mag2: np.ndarray, di: int, dj: int) -> np.ndarray:
    """mag2 sampled at (i+di, j+dj), zero outside the image."""
    h, w = mag2.shape
    out = np.zeros_like(mag2)
    src_i = slice(max(di, 0), h + min(di, 0))
    src_j = slice(max(dj, 0), w + min(dj, 0))
    dst_i = slice(max(-di, 0), h + min(-di, 0))
    dst_j = slice(max(-dj, 0), w + min(-dj, 0))
    out[dst_i, dst_j] = mag2[src_i, src_j]
    return out


def _nonmax_suppression(mag2: np.ndarray, bins: np.ndarray) -> np.ndarray:
    keep = np.zeros(mag2.shape, dtype=bool)
    for b, (prev, nxt) in _NMS_NEIGHBOURS.items():
        sel = bins == b
        prev_m = _shifted(mag2, *prev)
        next_m = _shifted(mag2, *nxt)
        keep |= sel & (mag2 > prev_m) & (mag2 >= next_m)
    return keep


def _threshold_sq(t: float) -> int:
    """Exact integer threshold for comparing against gx^2 + gy^2."""
    frac = Fraction(t) * GAUSS_DEN
    return math.ceil(frac * frac)


def _hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    edge = strong.copy()
    frontier = strong
    while frontier.any():
        grown = np.zeros_like(frontier)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di or dj:
                    grown |= _shifted_bool(frontier, di, dj)
        grown &= weak & ~edge
        edge |= grown
        frontier = grown
    return edge


def _shifted_bool(mask: np.ndarray, di: int, dj: int) -> np.ndarray:
    h, w = mask.shape
    out = np.zeros_like(mask)
    src_i = slice(max(di, 0), h + min(di, 0))
    src_j = slice(max(dj, 0), w + min(dj, 0))
    dst_i = slice(max(-di, 0), h + min(-di, 0))
    dst_j = slice(max(-dj, 0), w + min(-dj, 0))
    out[dst_i, dst_j] = mask[src_i, src_j]
    return out


def canny_edges(img: RgbImage, low: float = DEFAULT_LOW, high: float = DEFAULT_HIGH) -> BitEdgeMap:
    """Binary edge map of the image; bit set <=> edge pixel."""
    if not (0 <= low <= high):
        raise ValidationError(f"thresholds must satisfy 0 <= low <= high, got ({low}, {high})")

    h, w = img.height, img.width
    luma = to_grayscale(img).samples.astype(np.int64)

    top = left = 0
    if h < KERNEL_SIZE or w < KERNEL_SIZE:
        pad_h = max(0, KERNEL_SIZE - h)
        pad_w = max(0, KERNEL_SIZE - w)
        top, left = pad_h // 2, pad_w // 2
        luma = np.pad(luma, ((top, pad_h - top), (left, pad_w - left)))

    gx, gy, mag2 = _gradients_raw(luma)
    bins = _direction_bins(gx, gy)
    ridge = _nonmax_suppression(mag2, bins)

    high2 = _threshold_sq(high)
    low2 = _threshold_sq(low)
    strong = ridge & (mag2 >= high2)
    weak = ridge & (mag2 >= low2) & ~strong
    edge = _hysteresis(strong, weak)

    edge = edge[top : top + h, left : left + w]
    return BitEdgeMap.from_mask(edge)
