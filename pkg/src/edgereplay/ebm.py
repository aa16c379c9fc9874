"""EBM1: the bit-packed edge-map container.

Little-endian layout:

    magic "EBM1" | H:u32 | W:u32 | orig_h:u32 | orig_w:u32 | packed rows

Rows are packed MSB-first and padded to whole bytes. The original image
dimensions ride along because regenerated exemplars are resized back to
them; header bytes are excluded from memory-unit accounting, which counts
only the pixel payload (rows), at 1 bit per pixel versus 24 for RGB.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ValidationError
from .images import BitEdgeMap, bytes_per_row

MAGIC = b"EBM1"
_HEADER = struct.Struct("<4sIIII")


def encode_ebm(edges: BitEdgeMap, orig_h: int, orig_w: int) -> bytes:
    if orig_h < 1 or orig_w < 1:
        raise ValidationError("original dimensions must be >= 1")
    header = _HEADER.pack(MAGIC, edges.height, edges.width, orig_h, orig_w)
    return header + edges.tobytes()


def decode_ebm(data: bytes) -> tuple[BitEdgeMap, int, int]:
    if len(data) < _HEADER.size:
        raise ValidationError("EBM1 container truncated: header incomplete")
    magic, height, width, orig_h, orig_w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValidationError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if height < 1 or width < 1 or orig_h < 1 or orig_w < 1:
        raise ValidationError("EBM1 header carries non-positive dimensions")
    expected = _HEADER.size + height * bytes_per_row(width)
    if len(data) != expected:
        raise ValidationError(
            f"EBM1 payload length {len(data)} != expected {expected} for {height}x{width}"
        )
    rows = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size).reshape(
        height, bytes_per_row(width)
    )
    if width % 8:
        pad_mask = (1 << (8 - width % 8)) - 1
        if np.any(rows[:, -1] & pad_mask):
            raise ValidationError("EBM1 row padding bits must be zero")
    return BitEdgeMap(height, width, rows.copy()), orig_h, orig_w


def pixel_payload_bytes(edges: BitEdgeMap) -> int:
    """Bytes of packed pixel rows, the part counted against the memory budget."""
    return edges.height * bytes_per_row(edges.width)
