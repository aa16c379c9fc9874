"""Prompt extraction: target-dimension math, resize-order schemes, and labels.

A stored exemplar surrogate is a visual prompt (1-bit edge map at
generator-friendly dimensions, both multiples of 64) plus a textual prompt
(the normalised class tag). Two extraction schemes exist: detect edges at
the native size and nearest-resize the map (edge_first), or resize the
image and detect edges at the target size (image_first, better for
low-resolution sources at the cost of storing a larger map).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean

from .canny import DEFAULT_HIGH, DEFAULT_LOW, canny_edges
from .errors import ValidationError
from .images import BitEdgeMap, RgbImage
from .resample import resize_edges_nearest, resize_rgb

# 8-bit, 3-channel RGB versus 1 bit per pixel.
COMPRESSION_RATIO = 24

SCHEMES = ("edge_first", "image_first")
GAMMA_POLICIES = ("fixed512", "caltech_adaptive")
LABEL_STYLES = ("caltech", "food", "places")

# Second-level qualifiers that name a sub-location and read naturally after
# the first-level name; every other qualifier is moved in front.
_APPENDED_QUALIFIERS = frozenset({"platform"})


@dataclass(frozen=True)
class TextualPrompt:
    """Lowercase space-separated class tag."""

    text: str

    def __post_init__(self):
        if not self.text:
            raise ValidationError("textual prompt must be nonempty")
        if self.text != self.text.lower():
            raise ValidationError("textual prompt must be lowercase")
        tokens = self.text.split(" ")
        for tok in tokens:
            if not tok:
                raise ValidationError("textual prompt has empty token (double space?)")
            if any(c in "_-/" for c in tok):
                raise ValidationError(f"textual prompt token {tok!r} has forbidden separator")
            if tok.isdigit():
                raise ValidationError(f"textual prompt token {tok!r} is digits only")


@dataclass(frozen=True)
class VisualPrompt:
    """Edge map at generator dimensions plus the original image size."""

    edges: BitEdgeMap
    orig_h: int
    orig_w: int
    scheme: str

    def __post_init__(self):
        if self.edges.height % 64 or self.edges.width % 64:
            raise ValidationError("visual prompt dimensions must be multiples of 64")
        if self.orig_h < 1 or self.orig_w < 1:
            raise ValidationError("original dimensions must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class PromptRecord:
    """Stored exemplar surrogate: visual + textual prompt and identity."""

    visual: VisualPrompt
    textual: TextualPrompt
    class_id: int
    source_id: str


def target_dims(h: int, w: int, gamma: int) -> tuple[int, int]:
    """Generator dimensions: shorter side exactly gamma, longer side scaled
    aspect-preserving then snapped to the nearest multiple of 64 (ties up)."""
    if h < 1 or w < 1:
        raise ValidationError("image dimensions must be >= 1")
    if gamma < 64 or gamma % 64:
        raise ValidationError(f"gamma must be a positive multiple of 64, got {gamma}")
    shorter, longer = (h, w) if h <= w else (w, h)
    # Nearest multiple of 64 to longer*gamma/shorter, ties rounded up,
    # evaluated in exact integer arithmetic.
    n = longer * gamma
    d = shorter
    long_out = 64 * ((n + 32 * d) // (64 * d))
    return (gamma, long_out) if h <= w else (long_out, gamma)


def choose_gamma(h: int, w: int, policy: str) -> int:
    if policy == "fixed512":
        return 512
    if policy == "caltech_adaptive":
        return 512 if min(h, w) >= 512 else 256
    raise ValidationError(f"unknown gamma policy {policy!r}")


def extract_visual_prompt(
    img: RgbImage,
    gamma: int,
    scheme: str,
    low: float = DEFAULT_LOW,
    high: float = DEFAULT_HIGH,
) -> VisualPrompt:
    h, w = img.height, img.width
    height, width = target_dims(h, w, gamma)
    if scheme == "edge_first":
        edges = canny_edges(img, low, high)
        edges = resize_edges_nearest(edges, height, width)
    elif scheme == "image_first":
        method = "lanczos" if height * width >= h * w else "area"
        edges = canny_edges(resize_rgb(img, height, width, method), low, high)
    else:
        raise ValidationError(f"unknown scheme {scheme!r}")
    return VisualPrompt(edges, h, w, scheme)


def normalize_label(raw: str, style: str) -> TextualPrompt:
    if not raw or not raw.strip():
        raise ValidationError("raw label must be nonempty")
    text = raw.strip()
    if style == "caltech":
        text = re.sub(r"^\d+\.", "", text)
        text = re.sub(r"-\d+$", "", text)
        text = text.replace("-", " ")
    elif style == "food":
        text = text.replace("_", " ")
    elif style == "places":
        if "/" in text:
            first, qualifier = text.split("/", 1)
            first = first.replace("_", " ").strip()
            qualifier = qualifier.replace("_", " ").strip()
            if qualifier in _APPENDED_QUALIFIERS:
                text = f"{first} {qualifier}"
            else:
                text = f"{qualifier} {first}"
        else:
            text = text.replace("_", " ")
    else:
        raise ValidationError(f"unknown label style {style!r}")
    text = " ".join(text.lower().split())
    if not text:
        raise ValidationError(f"label {raw!r} is empty after stripping")
    return TextualPrompt(text)


def avg_area_ratio(dims: list[tuple[int, int]], gamma_policy: str) -> float:
    """Mean of (H*W)/(h*w) over the corpus under the given gamma policy."""
    if not dims:
        raise ValidationError("dims must be nonempty")
    ratios = []
    for h, w in dims:
        gamma = choose_gamma(h, w, gamma_policy)
        height, width = target_dims(h, w, gamma)
        ratios.append((height * width) / (h * w))
    return fmean(ratios)


def capacity_per_unit(ratio: float) -> float:
    """Edge maps stored per memory unit. One unit buys COMPRESSION_RATIO
    same-size maps; up-scaled maps cost proportionally more. Ratios below 1
    are clamped: the unit is defined by the original RGB image."""
    if ratio <= 0:
        raise ValidationError("area ratio must be positive")
    return COMPRESSION_RATIO / max(ratio, 1.0)


def load_label_table(path: str | Path) -> list[str]:
    """Raw labels, one per line; line index is the class id."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    labels = [line.strip() for line in lines if line.strip()]
    if not labels:
        raise ValidationError(f"label table {path} is empty")
    return labels
