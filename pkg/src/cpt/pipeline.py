"""End-to-end flows: colorize, score, decode.

Grounding feeds each region batch as its own forward pass (colorized from
the raw image every time) and aggregates the per-batch decodings. Relation
detection colorizes the subject and object pair once and scores one template
per relation length.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .backend import ScoreRequest, ScoringBackend, response_to_distribution
from .batching import BatchPlan, plan_batches
from .colors import NONE_LABEL, ColorSet
from .dataio import (
    GroundingInstance,
    PredictionRecord,
    RelationInstance,
    decode_mask_rle,
    is_inline_rle,
)
from .errors import InputError
from .prompts import (
    NA_TOKENS,
    CandidateTokenSeq,
    grounding_template,
    na_relation,
    relation_template,
)
from .raster import (
    BoundingBox,
    PromptShape,
    RasterImage,
    SegmentMask,
    apply_visual_subprompt,
    load_mask_png,
    load_png,
)
from .scoring import (
    GroundingResult,
    MaskDistribution,
    RelationScoreTable,
    decode_grounding,
    score_relations,
)


def check_color_compatibility(colors: ColorSet, capacity: int) -> None:
    if capacity > len(colors):
        raise InputError(
            f"batch capacity {capacity} exceeds the {len(colors)}-color set"
        )
    if NONE_LABEL in colors.texts:
        raise InputError(f"color set uses the reserved label {NONE_LABEL!r}")


def batch_assignments(
    instance: GroundingInstance,
    batch_members: Sequence[int],
    colors: ColorSet,
    shape: PromptShape,
    base_dir: Path,
) -> list[tuple[BoundingBox | SegmentMask, object]]:
    """Pair each batch member with its color; mask shape resolves the
    instance's mask refs (inline run-length or a path next to the dataset)."""
    assignments = []
    for pos, idx in enumerate(batch_members):
        if shape is PromptShape.BLOCK:
            region: BoundingBox | SegmentMask = instance.proposals[idx]
        else:
            ref = instance.masks[idx] if instance.masks else None
            if ref is None:
                raise InputError(f"instance {instance.id!r}: proposal {idx} has no mask")
            if is_inline_rle(ref):
                region = decode_mask_rle(ref)
            else:
                region = load_mask_png(base_dir / ref)
        assignments.append((region, colors[pos]))
    return assignments


def grounding_candidates(colors: ColorSet, n: int) -> tuple[CandidateTokenSeq, ...]:
    slot = [CandidateTokenSeq(label=colors[i].text, tokens=(colors[i].text,)) for i in range(n)]
    slot.append(CandidateTokenSeq(label=NONE_LABEL, tokens=(NONE_LABEL,)))
    return tuple(slot)


@dataclass
class GroundedInstance:
    instance: GroundingInstance
    plan: BatchPlan
    result: GroundingResult
    record: PredictionRecord


def ground_instance(
    instance: GroundingInstance,
    image: RasterImage,
    colors: ColorSet,
    backend: ScoringBackend,
    alpha: float,
    capacity: int,
    overlap_threshold: float = 0.5,
    shape: PromptShape = PromptShape.BLOCK,
    base_dir: Path | None = None,
) -> GroundedInstance:
    started = time.monotonic()
    base_dir = base_dir or Path(".")
    plan = plan_batches(instance.proposals, capacity=capacity, overlap_threshold=overlap_threshold)
    prompt = grounding_template(instance.query)
    dists: list[MaskDistribution] = []
    for batch in plan.batches:
        assignments = batch_assignments(instance, batch.members, colors, shape, base_dir)
        colorized = apply_visual_subprompt(image, assignments, alpha, shape)
        request = ScoreRequest(
            image=colorized,
            prompt=prompt.rendered,
            mask_count=1,
            candidates=(grounding_candidates(colors, len(batch.members)),),
            meta={**instance.meta, "instance_id": instance.id},
        )
        dists.append(response_to_distribution(backend.score(request)))
    result = decode_grounding(plan, colors, dists)

    # Accuracy scoring needs a box even when every batch said "none"; keep
    # the none-verdict visible in the record.
    fallback = result.predicted is None
    index = result.fallback_prediction() if fallback else result.predicted
    record = PredictionRecord(
        instance_id=instance.id,
        predicted_box=instance.proposals[index],
        predicted_index=index,
        per_region_prob=dict(result.per_region_prob),
        elapsed_ms=int((time.monotonic() - started) * 1000),
        fallback=fallback,
    )
    return GroundedInstance(instance=instance, plan=plan, result=result, record=record)


def error_record(instance: GroundingInstance, message: str) -> PredictionRecord:
    return PredictionRecord(
        instance_id=instance.id,
        predicted_box=None,
        predicted_index=None,
        per_region_prob={},
        error=message,
    )


# --- relations ---------------------------------------------------------------

@dataclass
class RelationPrediction:
    instance: RelationInstance
    table: RelationScoreTable


def relation_vocab_by_length(vocab: Sequence[tuple[str, Sequence[str]]]) -> dict[int, list[tuple[str, list[str]]]]:
    grouped: dict[int, list[tuple[str, list[str]]]] = {}
    for label, tokens in vocab:
        l = len(tokens)
        if l not in NA_TOKENS:
            raise InputError(f"relation {label!r} has {l} tokens; templates take 1-3")
        grouped.setdefault(l, []).append((label, list(tokens)))
    return grouped


def relation_slot_candidates(
    relations: Sequence[tuple[str, Sequence[str]]], l: int
) -> tuple[tuple[CandidateTokenSeq, ...], ...]:
    """Slot i's candidates: the distinct i-th tokens of the length-l
    relations plus the no-relation placeholder's i-th token."""
    na = na_relation(l)
    slots = []
    for i in range(l):
        seen: list[str] = []
        for _, tokens in relations:
            if tokens[i] not in seen:
                seen.append(tokens[i])
        if na.tokens[i] not in seen:
            seen.append(na.tokens[i])
        slots.append(tuple(CandidateTokenSeq(label=t, tokens=(t,)) for t in seen))
    return tuple(slots)


def score_relation_instance(
    instance: RelationInstance,
    image: RasterImage,
    colors: ColorSet,
    backend: ScoringBackend,
    alpha: float,
    vocab: Sequence[tuple[str, Sequence[str]]],
) -> RelationPrediction:
    """Mark the pair with the first two colors and score every template
    length present in the vocabulary. Pairs come as boxes, so relation
    scoring always uses block overlays."""
    if len(colors) < 2:
        raise InputError("relation scoring needs at least two colors")
    subject_color, object_color = colors[0], colors[1]
    colorized = apply_visual_subprompt(
        image,
        [(instance.subject.box, subject_color), (instance.object.box, object_color)],
        alpha,
        shape=PromptShape.BLOCK,
    )
    grouped = relation_vocab_by_length(vocab)
    dists: dict[int, MaskDistribution] = {}
    for l in sorted(grouped):
        prompt = relation_template(
            instance.subject.text, subject_color.text,
            instance.object.text, object_color.text, l,
        )
        request = ScoreRequest(
            image=colorized,
            prompt=prompt.rendered,
            mask_count=l,
            candidates=relation_slot_candidates(grouped[l], l),
            meta={"instance_id": instance.id},
        )
        dists[l] = response_to_distribution(backend.score(request))
    table = score_relations(dists, [(label, tokens) for label, tokens in vocab])
    return RelationPrediction(instance=instance, table=table)


def ranked_triplets_by_image(
    predictions: Sequence[RelationPrediction],
) -> dict[str, list[tuple[str, str, str]]]:
    """Merge all pairs of an image and rank triplets by score (ties by
    triplet tuple so the order is reproducible)."""
    per_image: dict[str, list[tuple[float, tuple[str, str, str]]]] = {}
    for pred in predictions:
        inst = pred.instance
        for label, score in pred.table.scores.items():
            triplet = (inst.subject_id(), label, inst.object_id())
            per_image.setdefault(inst.image_ref, []).append((score, triplet))
    ranked = {}
    for image_ref, scored in per_image.items():
        scored.sort(key=lambda item: (-item[0], item[1]))
        ranked[image_ref] = [t for _, t in scored]
    return ranked


def gold_triplets_by_image(
    instances: Sequence[RelationInstance],
) -> dict[str, set[tuple[str, str, str]]]:
    gold: dict[str, set[tuple[str, str, str]]] = {}
    for inst in instances:
        bucket = gold.setdefault(inst.image_ref, set())
        for label in inst.gold_relations:
            bucket.add((inst.subject_id(), label, inst.object_id()))
    return gold


def load_instance_image(instance_image_ref: str, base_dir: Path) -> RasterImage:
    return load_png(base_dir / instance_image_ref)
