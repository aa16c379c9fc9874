from __future__ import annotations

import numpy as np
import pytest

from edgereplay.images import BitEdgeMap, RgbImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rgb(rng: np.random.Generator, h: int, w: int) -> RgbImage:
    return RgbImage.from_array(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


def solid_rgb(h: int, w: int, value: tuple[int, int, int]) -> RgbImage:
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    arr[:] = value
    return RgbImage.from_array(arr)


def step_rgb(h: int, w: int) -> RgbImage:
    """Left half black, right half white."""
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    arr[:, w // 2 :] = 255
    return RgbImage.from_array(arr)


def disk_rgb(h: int, w: int, fg: int = 220, bg: int = 30) -> RgbImage:
    ys, xs = np.mgrid[0:h, 0:w]
    mask = (ys - h / 2) ** 2 + (xs - w / 2) ** 2 < (min(h, w) / 3) ** 2
    arr = np.where(mask[..., None], fg, bg).astype(np.uint8)
    return RgbImage.from_array(np.repeat(arr, 3, axis=2) if arr.shape[2] == 1 else arr)


def ring_edges(h: int, w: int, thickness: float = 1.0) -> BitEdgeMap:
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dist = np.sqrt((ys - h / 2) ** 2 + (xs - w / 2) ** 2)
    return BitEdgeMap.from_mask(np.abs(dist - min(h, w) / 3) < thickness)
