"""Memory-unit ledger, herding ranking, and exemplar selection.

A class receives b memory units; one unit equals one original RGB image.
A fraction alpha of the units is spent on compressed prompts instead,
each unit buying capacity_per_unit edge maps (24 for same-size maps).
Selection takes the herding-best R images as real exemplars and the next
S as prompt sources; the rest of the class is discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class MemoryLedger:
    """Per-class budget split into real-image and prompt-backed slots."""

    units_per_class: int
    compressed_fraction: float  # effective: compressed_units / units_per_class
    capacity_per_unit: float
    compressed_units: int
    real_slots: int
    prompt_slots: int

    def __post_init__(self):
        if self.real_slots + self.compressed_units != self.units_per_class:
            raise ValidationError("ledger slots do not add up to the unit budget")
        if not (0 <= self.compressed_units <= self.units_per_class):
            raise ValidationError("compressed units out of range")


def allocate(units_per_class: int, alpha: float, capacity_per_unit: float) -> MemoryLedger:
    """Split b units into R real slots and S prompt slots.

    Units are integral, so the compressed share is round(alpha*b) (half
    up); each compressed unit stores floor(capacity_per_unit) maps in
    aggregate: S = floor(compressed_units * capacity_per_unit).
    """
    if units_per_class < 1:
        raise ValidationError("units_per_class must be >= 1")
    if not (0.0 <= alpha <= 1.0):
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    if capacity_per_unit < 1:
        raise ValidationError("capacity_per_unit must be >= 1")
    compressed = int(math.floor(alpha * units_per_class + 0.5))
    compressed = min(max(compressed, 0), units_per_class)
    real = units_per_class - compressed
    prompt = int(math.floor(compressed * capacity_per_unit))
    return MemoryLedger(
        units_per_class=units_per_class,
        compressed_fraction=compressed / units_per_class,
        capacity_per_unit=capacity_per_unit,
        compressed_units=compressed,
        real_slots=real,
        prompt_slots=prompt,
    )


@dataclass(frozen=True)
class HerdingRank:
    """Permutation of sample indices, most representative first."""

    ordering: tuple[int, ...]
    class_id: int | None = None

    def __post_init__(self):
        if sorted(self.ordering) != list(range(len(self.ordering))):
            raise ValidationError("ordering must be a permutation of 0..n-1")


def herding_order(features: np.ndarray, class_id: int | None = None) -> HerdingRank:
    """Greedy ordering whose running feature mean tracks the class mean.

    Vectors are L2-normalised first (zero vectors stay zero). At step k the
    remaining sample minimising ||mu - (chosen_sum + x)/k||_2 is picked;
    ties break to the lowest index.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ValidationError("features must be a nonempty (n, d) array")
    if not np.all(np.isfinite(feats)):
        raise ValidationError("features must be finite")

    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    phi = np.divide(feats, norms, out=np.zeros_like(feats), where=norms > 0)
    mu = phi.mean(axis=0)

    n = phi.shape[0]
    ordering = []
    chosen_sum = np.zeros(phi.shape[1])
    remaining = np.ones(n, dtype=bool)
    for k in range(1, n + 1):
        candidate_means = (chosen_sum + phi) / k
        # Squared distances as plain sums of squares: mirror-image
        # candidates (e.g. both points at n=2, k=1) tie bit-exactly, so
        # the lowest-index rule is deterministic across implementations.
        dist2 = ((mu - candidate_means) ** 2).sum(axis=1)
        dist2[~remaining] = np.inf
        pick = int(np.argmin(dist2))
        ordering.append(pick)
        chosen_sum += phi[pick]
        remaining[pick] = False
    return HerdingRank(tuple(ordering), class_id)


@dataclass(frozen=True)
class Selection:
    """Indices split by fate: stored real, stored as prompts, discarded."""

    real: tuple[int, ...]
    prompts: tuple[int, ...]
    discarded: tuple[int, ...]


def select_exemplars(ranked: HerdingRank, ledger: MemoryLedger) -> Selection:
    """First R ranked samples become real exemplars, the next S prompt
    sources; underfull classes fill real slots first."""
    order = ranked.ordering
    r, s = ledger.real_slots, ledger.prompt_slots
    return Selection(
        real=order[:r],
        prompts=order[r : r + s],
        discarded=order[r + s :],
    )
