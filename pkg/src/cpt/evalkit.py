"""Geometry, metrics, split sampling and multi-split aggregation.

A grounding prediction counts as correct when IoU with the gold box is
strictly greater than the threshold (0.5 by default). Relation detection is
scored with micro recall@N over ranked triplets plus its unweighted
per-label mean. Few-shot experiments sample n seeded train/validation splits
and report mean and sample standard deviation across them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import InputError, PoolTooSmall
from .raster import BoundingBox
from .rng import SplitMix64

# (subject box id, relation label, object box id)
Triplet = tuple[str, str, str]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    # Areas use the same corner-subtraction arithmetic as the intersection so
    # identical boxes give exactly 1.0 and the ratio never exceeds 1.
    ax2, ay2 = a.x + a.w, a.y + a.h
    bx2, by2 = b.x + b.w, b.y + b.h
    ix = min(ax2, bx2) - max(a.x, b.x)
    iy = min(ay2, by2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (ax2 - a.x) * (ay2 - a.y)
    area_b = (bx2 - b.x) * (by2 - b.y)
    return inter / (area_a + area_b - inter)


def grounding_accuracy(
    preds: Sequence[tuple[BoundingBox | None, BoundingBox]],
    threshold: float = 0.5,
) -> float:
    """Fraction of instances with a prediction whose IoU with gold exceeds
    the threshold (strictly)."""
    if not 0 < threshold <= 1:
        raise InputError(f"threshold must be in (0, 1], got {threshold}")
    if not preds:
        return 0.0
    hits = sum(1 for pred, gold in preds if pred is not None and iou(pred, gold) > threshold)
    return hits / len(preds)


def recall_at_n(
    ranked_triplets: Mapping[str, Sequence[Triplet]],
    gold_triplets: Mapping[str, set[Triplet]],
    n: int,
) -> float:
    """Micro recall: matched gold triplets within each image's top-n,
    summed over images, over the total gold count."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    matched = 0
    total = 0
    for image_id, gold in gold_triplets.items():
        total += len(gold)
        top = set(ranked_triplets.get(image_id, ())[:n])
        matched += len(top & set(gold))
    return matched / total if total else 0.0


def mean_recall_at_n(
    ranked_triplets: Mapping[str, Sequence[Triplet]],
    gold_triplets: Mapping[str, set[Triplet]],
    n: int,
) -> float:
    """Unweighted mean over relation labels of recall@n restricted to that
    label's gold triplets; labels without gold are skipped."""
    labels = sorted({t[1] for gold in gold_triplets.values() for t in gold})
    if not labels:
        return 0.0
    recalls = []
    for label in labels:
        restricted = {
            img: {t for t in gold if t[1] == label} for img, gold in gold_triplets.items()
        }
        recalls.append(recall_at_n(ranked_triplets, restricted, n))
    return sum(recalls) / len(recalls)


@dataclass(frozen=True)
class SplitSpec:
    """How to sample few-shot training splits and their validation sets.

    k_shots counts instances in total, or per label when per_label is set
    (the relation-detection protocol).
    """

    k_shots: int
    seed: int
    n_splits: int = 5
    val_size: int = 16
    per_label: bool = False

    def __post_init__(self):
        if self.k_shots < 0 or self.n_splits < 1 or self.val_size < 0:
            raise InputError(f"bad split spec {self}")


def sample_splits(
    pool: Sequence[str],
    spec: SplitSpec,
    labels: Mapping[str, str] | None = None,
) -> list[tuple[list[str], list[str]]]:
    """Seeded (train ids, val ids) pairs, one per split.

    Split i draws from a SplitMix64 stream keyed by (seed, i); the pool is
    first put in sorted order so results do not depend on input ordering.
    Train and validation draws come from the same stream without
    replacement, so they are disjoint by construction.
    """
    if len(set(pool)) != len(pool):
        raise InputError("pool ids must be unique")
    if spec.per_label and labels is None:
        raise InputError("per-label sampling needs an id -> label mapping")
    splits = []
    for i in range(spec.n_splits):
        rng = SplitMix64(spec.seed, stream=i)
        if not spec.per_label:
            remaining = sorted(pool)
            if len(remaining) < spec.k_shots + spec.val_size:
                raise PoolTooSmall(
                    f"pool of {len(remaining)} cannot supply {spec.k_shots} train "
                    f"+ {spec.val_size} val"
                )
            train = rng.draw(remaining, spec.k_shots)
        else:
            groups: dict[str, list[str]] = {}
            for pid in sorted(pool):
                groups.setdefault(labels[pid], []).append(pid)
            train = []
            leftovers: list[str] = []
            for label in sorted(groups):
                group = groups[label]
                if len(group) < spec.k_shots:
                    raise PoolTooSmall(
                        f"label {label!r} has {len(group)} instances, need {spec.k_shots}"
                    )
                train.extend(rng.draw(group, spec.k_shots))
                leftovers.extend(group)
            remaining = sorted(leftovers)
            if len(remaining) < spec.val_size:
                raise PoolTooSmall(
                    f"{len(remaining)} instances left for a {spec.val_size}-instance val set"
                )
        val = rng.draw(remaining, spec.val_size)
        splits.append((train, val))
    return splits


@dataclass
class MetricReport:
    per_split: list[dict[str, float]]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)


def aggregate(per_split_metrics: Sequence[Mapping[str, float]]) -> MetricReport:
    """Mean and sample standard deviation (n-1 denominator, 0 for a single
    split) per metric key."""
    if not per_split_metrics:
        raise InputError("need at least one split")
    keys = set(per_split_metrics[0])
    for m in per_split_metrics:
        if set(m) != keys:
            raise InputError(f"metric keys differ across splits: {set(m)} vs {keys}")
    n = len(per_split_metrics)
    mean = {}
    std = {}
    for k in sorted(keys):
        values = [m[k] for m in per_split_metrics]
        mu = sum(values) / n
        mean[k] = mu
        std[k] = math.sqrt(sum((v - mu) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return MetricReport(per_split=[dict(sorted(m.items())) for m in per_split_metrics],
                        mean=mean, std=std)


def report_to_json(report: MetricReport) -> str:
    """Canonical JSON: fixed key order, metric keys sorted."""
    obj = {
        "per_split": [dict(sorted(m.items())) for m in report.per_split],
        "mean": dict(sorted(report.mean.items())),
        "std": dict(sorted(report.std.items())),
    }
    return json.dumps(obj, indent=2, sort_keys=False)


def format_report(report: MetricReport) -> str:
    """Human-readable table, 4 decimal places."""
    lines = []
    keys = sorted(report.mean)
    for i, metrics in enumerate(report.per_split):
        cells = "  ".join(f"{k}={metrics[k]:.4f}" for k in keys)
        lines.append(f"split {i}: {cells}")
    lines.append("mean:    " + "  ".join(f"{k}={report.mean[k]:.4f}" for k in keys))
    lines.append("std:     " + "  ".join(f"{k}={report.std[k]:.4f}" for k in keys))
    return "\n".join(lines)
