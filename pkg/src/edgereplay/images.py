"""Pixel containers: 8-bit RGB/gray images and 1-bit packed edge maps.

Edge maps pack each row into whole bytes (MSB-first within a byte, numpy's
packbits convention); padding bits in the final byte of a row are always
zero. PNG encode/decode is delegated to Pillow.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError


def bytes_per_row(width: int) -> int:
    return (width + 7) // 8


@dataclass(frozen=True)
class RgbImage:
    """Row-major 8-bit 3-channel image."""

    height: int
    width: int
    pixels: np.ndarray  # uint8, shape (height, width, 3)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("image dimensions must be >= 1")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValidationError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{(self.height, self.width, 3)}"
            )
        if self.pixels.dtype != np.uint8:
            raise ValidationError("pixels must be uint8")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RgbImage":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        return cls(arr.shape[0], arr.shape[1], arr)

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, RgbImage):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class GrayImage:
    """Row-major 8-bit single-channel image."""

    height: int
    width: int
    samples: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("image dimensions must be >= 1")
        if self.samples.shape != (self.height, self.width):
            raise ValidationError("sample buffer does not match dimensions")
        if self.samples.dtype != np.uint8:
            raise ValidationError("samples must be uint8")


@dataclass(frozen=True)
class BitEdgeMap:
    """1-bit edge image, rows packed MSB-first and padded to whole bytes."""

    height: int
    width: int
    bits: np.ndarray  # uint8, shape (height, bytes_per_row(width))

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("edge map dimensions must be >= 1")
        expected = (self.height, bytes_per_row(self.width))
        if self.bits.shape != expected:
            raise ValidationError(f"bit buffer shape {self.bits.shape} != {expected}")
        if self.bits.dtype != np.uint8:
            raise ValidationError("bits must be uint8")
        if self.width % 8 and np.any(self.bits[:, -1] & _pad_mask(self.width)):
            raise ValidationError("padding bits must be zero")

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "BitEdgeMap":
        """Pack a boolean (height, width) mask."""
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ValidationError("mask must be 2-D")
        packed = np.packbits(mask, axis=1)
        return cls(mask.shape[0], mask.shape[1], packed)

    def to_mask(self) -> np.ndarray:
        """Unpack to a boolean (height, width) mask."""
        return np.unpackbits(self.bits, axis=1, count=self.width).astype(bool)

    def count(self) -> int:
        """Number of set edge pixels."""
        return int(np.unpackbits(self.bits, axis=1, count=self.width).sum())

    def tobytes(self) -> bytes:
        return self.bits.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitEdgeMap):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and np.array_equal(self.bits, other.bits)
        )


def _pad_mask(width: int) -> int:
    # Bits in the last byte of each row that fall beyond `width`.
    used = width % 8
    return (1 << (8 - used)) - 1 if used else 0


@dataclass(frozen=True)
class GradientField:
    """Per-pixel gradient magnitude and 4-way quantized direction.

    Directions index the axes {0: 0deg, 1: 45deg, 2: 90deg, 3: 135deg},
    measured with rows increasing downward, so 45deg runs down-right.
    """

    height: int
    width: int
    magnitude: np.ndarray  # float64, shape (height, width), non-negative
    direction: np.ndarray  # uint8 in {0,1,2,3}

    def __post_init__(self):
        if not np.all(np.isfinite(self.magnitude)):
            raise ValidationError("gradient magnitude must be finite")
        if self.direction.dtype != np.uint8 or self.direction.max(initial=0) > 3:
            raise ValidationError("direction must be uint8 in {0,1,2,3}")


def load_png(path: str | Path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage.from_array(np.asarray(im.convert("RGB")))


def save_png(img: RgbImage, path: str | Path) -> None:
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def png_bytes(img: RgbImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def rgb_from_png_bytes(data: bytes) -> RgbImage:
    with Image.open(io.BytesIO(data)) as im:
        return RgbImage.from_array(np.asarray(im.convert("RGB")))


def edges_to_png_bytes(edges: BitEdgeMap) -> bytes:
    """8-bit grayscale PNG with edge pixels at 255, background at 0.

    This is the form consumed by external diffusion-control tooling; the
    1-bit packed form stays internal to the engine.
    """
    arr = np.where(edges.to_mask(), 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def edges_from_png_bytes(data: bytes) -> BitEdgeMap:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("L"))
    return BitEdgeMap.from_mask(arr > 127)
