"""Deterministic seed derivation.

All randomness in the engine flows from one experiment seed through
SHA-256 digests of injectively encoded part tuples. Hash-derived seeds are
stable under reordering and parallel execution, unlike sequential counters.
"""

from __future__ import annotations

import hashlib

import numpy as np

_INT_TAG = b"i"
_STR_TAG = b"s"
_BYTES_TAG = b"b"


def _encode_part(part: int | str | bytes) -> bytes:
    # Length-prefixed, type-tagged encoding keeps the overall mapping injective.
    if isinstance(part, bool):
        raise TypeError("bool is not a valid seed part")
    if isinstance(part, int):
        raw = part.to_bytes(16, "little", signed=True)
        tag = _INT_TAG
    elif isinstance(part, str):
        raw = part.encode("utf-8")
        tag = _STR_TAG
    elif isinstance(part, (bytes, bytearray)):
        raw = bytes(part)
        tag = _BYTES_TAG
    else:
        raise TypeError(f"unsupported seed part type: {type(part)!r}")
    return tag + len(raw).to_bytes(8, "little") + raw


def digest(*parts: int | str | bytes) -> bytes:
    """32-byte SHA-256 digest of the encoded parts."""
    h = hashlib.sha256()
    for part in parts:
        h.update(_encode_part(part))
    return h.digest()


def digest64(*parts: int | str | bytes) -> int:
    """Unsigned 64-bit seed derived from the parts."""
    return int.from_bytes(digest(*parts)[:8], "little")


def hexdigest(*parts: int | str | bytes) -> str:
    return digest(*parts).hex()


def rng_for(*parts: int | str | bytes) -> np.random.Generator:
    """Independent generator keyed by the given parts."""
    return np.random.Generator(np.random.PCG64(digest64(*parts)))
