"""Partition region proposals into color-set-sized batches.

Heavily overlapped colored regions confuse decoding, so a batch only admits
regions whose pairwise IoU stays below a threshold; every batch is capped at
the color set size since each member needs its own color. Packing is greedy
first-fit over proposals sorted by descending area (large regions are the
hardest to co-batch), with ties broken by original index so plans are
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InputError, NoProposals
from .evalkit import iou
from .raster import BoundingBox


@dataclass(frozen=True)
class RegionBatch:
    """Proposal indices grouped for one colorization pass; member i is
    marked with color i of the active color set."""

    members: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise InputError(f"duplicate members in batch {self.members}")


@dataclass(frozen=True)
class BatchPlan:
    batches: tuple[RegionBatch, ...]
    overlap_threshold: float
    capacity: int


def plan_batches(
    proposals: Sequence[BoundingBox],
    capacity: int,
    overlap_threshold: float = 0.5,
) -> BatchPlan:
    """Greedy first-fit; the resulting batches partition the proposal index
    set, respect the capacity, and keep pairwise IoU below the threshold."""
    if not proposals:
        raise NoProposals("cannot batch an empty proposal list")
    if capacity < 1:
        raise InputError(f"capacity must be >= 1, got {capacity}")
    if not 0 < overlap_threshold <= 1:
        raise InputError(f"overlap threshold must be in (0, 1], got {overlap_threshold}")

    order = sorted(range(len(proposals)), key=lambda i: (-proposals[i].area(), i))
    batches: list[list[int]] = []
    for idx in order:
        for batch in batches:
            if len(batch) >= capacity:
                continue
            if all(iou(proposals[idx], proposals[j]) < overlap_threshold for j in batch):
                batch.append(idx)
                break
        else:
            batches.append([idx])
    return BatchPlan(
        batches=tuple(RegionBatch(tuple(b)) for b in batches),
        overlap_threshold=overlap_threshold,
        capacity=capacity,
    )
