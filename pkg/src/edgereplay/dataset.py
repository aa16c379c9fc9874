"""Procedural image classification dataset for desk-scale experiments.

Class c renders a regular (3 + c mod 8)-gon in a class-keyed hue over a
contrasting textured background, with per-sample random rotation, scale,
translation, and texture phase. Everything derives from the dataset seed,
so two builds with the same seed are byte-identical. Raw class labels are
underscore-joined colour/shape words (no digits), e.g. "teal_pentagon".
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .images import RgbImage, save_png
from .seeding import rng_for

_HUE_NAMES = (
    "red", "orange", "amber", "yellow", "lime", "green",
    "teal", "cyan", "blue", "violet", "purple", "magenta",
)
_POLY_NAMES = (
    "triangle", "square", "pentagon", "hexagon",
    "heptagon", "octagon", "nonagon", "decagon",
)
_EXTRA_WORDS = (
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "iota", "kappa", "lam", "mu", "nu", "xi", "omicron", "pi", "rho",
    "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega",
)

TEST_FRACTION = 0.2


def class_label(class_id: int) -> str:
    """Raw label for a class; unique for class_id < 576."""
    base = f"{_HUE_NAMES[class_id % 12]}_{_POLY_NAMES[class_id % 8]}"
    block = class_id // 24
    if block == 0:
        return base
    if block <= len(_EXTRA_WORDS):
        return f"{base}_{_EXTRA_WORDS[block - 1]}"
    raise ValidationError(f"class_id {class_id} exceeds the label scheme capacity")


def _polygon_sides(class_id: int) -> int:
    return 3 + class_id % 8


@dataclass(frozen=True)
class SampleGeometry:
    """Analytic description of one rendered sample, for oracle checks."""

    sides: int
    center_x: float
    center_y: float
    radius: float
    rotation: float

    def vertices(self) -> list[tuple[float, float]]:
        return [
            (
                self.center_x + self.radius * math.cos(self.rotation + 2 * math.pi * k / self.sides),
                self.center_y + self.radius * math.sin(self.rotation + 2 * math.pi * k / self.sides),
            )
            for k in range(self.sides)
        ]


@dataclass(frozen=True)
class Sample:
    class_id: int
    source_id: str
    image: RgbImage


def sample_geometry(seed: int, class_id: int, index: int, size: int) -> SampleGeometry:
    rng = rng_for("dataset-geom", seed, class_id, index)
    radius = float(rng.uniform(0.30, 0.38)) * size
    cx = size / 2 + float(rng.uniform(-0.03, 0.03)) * size
    cy = size / 2 + float(rng.uniform(-0.03, 0.03)) * size
    rotation = float(rng.uniform(0.0, 2 * math.pi))
    return SampleGeometry(_polygon_sides(class_id), cx, cy, radius, rotation)


_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SHAPE_LUMA = 165.0
BG_LUMA = 35.0
_WAVE_AMPLITUDE = 30.0


def _hsv255(h: float, s: float, v: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v)) * 255.0


def _at_luma(col: np.ndarray, target: float) -> np.ndarray:
    # Rescale toward white or black until the colour sits at the target
    # luma. Constant shape/background luma keeps the edge-detector margin
    # uniform across class hues, so the class signal lives in chroma.
    cur = float(_LUMA_WEIGHTS @ col)
    if cur < target:
        t = (target - cur) / (255.0 - cur)
        return col * (1 - t) + 255.0 * t
    return col * (target / cur)


def render_sample(seed: int, class_id: int, index: int, size: int) -> RgbImage:
    geom = sample_geometry(seed, class_id, index, size)
    rng = rng_for("dataset-paint", seed, class_id, index)

    hue = (class_id % 12) / 12.0
    shape_col = _at_luma(_hsv255(hue, 0.9, 1.0), SHAPE_LUMA + float(rng.uniform(-6, 6)))
    # Near-neutral dark ground: every class hue reads as a bright figure in
    # all three channels, the statistic regenerated exemplars reproduce.
    bg_col = _at_luma(_hsv255(hue + 0.5, 0.15, 0.5), BG_LUMA)

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)

    # Low-frequency per-channel waves plus mild pixel noise: textured but
    # too smooth to trip the edge detector away from the shape outline.
    canvas = np.empty((size, size, 3))
    for ch in range(3):
        fx, fy = rng.uniform(1.0, 3.0, size=2) / size
        phase = rng.uniform(0.0, 2 * math.pi)
        canvas[:, :, ch] = bg_col[ch] + _WAVE_AMPLITUDE * np.sin(
            2 * math.pi * (fx * xs + fy * ys) + phase
        )
    canvas += rng.uniform(-6.0, 6.0, size=(size, size, 3))

    # Convex polygon fill: a pixel centre is inside iff it is on the same
    # side of every directed edge.
    verts = geom.vertices()
    inside = np.ones((size, size), dtype=bool)
    px, py = xs + 0.5, ys + 0.5
    for k in range(geom.sides):
        x1, y1 = verts[k]
        x2, y2 = verts[(k + 1) % geom.sides]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        inside &= cross >= 0
    shape = shape_col[None, None, :] + rng.uniform(-6.0, 6.0, size=(size, size, 3))
    canvas = np.where(inside[:, :, None], shape, canvas)

    return RgbImage.from_array(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8))


@dataclass
class ProceduralDataset:
    num_classes: int
    n_per_class: int
    image_size: int
    seed: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.n_per_class < 2:
            raise ValidationError("n_per_class must be >= 2")
        if self.image_size < 16:
            raise ValidationError("image_size must be >= 16")
        self.labels = [class_label(c) for c in range(self.num_classes)]
        self._train_idx: dict[int, list[int]] = {}
        self._test_idx: dict[int, list[int]] = {}
        n_test = max(1, round(self.n_per_class * TEST_FRACTION))
        for c in range(self.num_classes):
            perm = rng_for("dataset-split", self.seed, c).permutation(self.n_per_class)
            self._test_idx[c] = sorted(int(i) for i in perm[:n_test])
            self._train_idx[c] = sorted(int(i) for i in perm[n_test:])
        self._cache: dict[tuple[int, int], Sample] = {}

    def _sample(self, class_id: int, index: int) -> Sample:
        key = (class_id, index)
        if key not in self._cache:
            img = render_sample(self.seed, class_id, index, self.image_size)
            self._cache[key] = Sample(class_id, f"c{class_id:03d}_s{index:03d}", img)
        return self._cache[key]

    def train_samples(self, class_ids) -> list[Sample]:
        return [self._sample(c, i) for c in class_ids for i in self._train_idx[c]]

    def test_samples(self, class_ids) -> list[Sample]:
        return [self._sample(c, i) for c in class_ids for i in self._test_idx[c]]

    def geometry(self, class_id: int, index: int) -> SampleGeometry:
        return sample_geometry(self.seed, class_id, index, self.image_size)

    def train_indices(self, class_id: int) -> list[int]:
        return list(self._train_idx[class_id])


def write_dataset(dataset: ProceduralDataset, root: str | Path) -> None:
    """PNG tree (train/<class_id>/, test/<class_id>/) plus labels.txt."""
    root = Path(root)
    for split, getter in (("train", dataset.train_samples), ("test", dataset.test_samples)):
        for c in range(dataset.num_classes):
            out = root / split / str(c)
            out.mkdir(parents=True, exist_ok=True)
            for sample in getter([c]):
                save_png(sample.image, out / f"{sample.source_id}.png")
    (root / "labels.txt").write_text("\n".join(dataset.labels) + "\n", encoding="utf-8")
