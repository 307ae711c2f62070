"""Turning candidate logits into decisions.

Distributions are candidate-restricted softmaxes stored as log-probabilities.
Grounding aggregates per-batch decoding: a region's probability is what its
assigned color received within its own batch, and a batch only nominates
regions that beat the batch's "none" candidate. Cross-batch comparison uses
the raw in-batch probabilities; each batch is an independent forward pass and
no calibration is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .colors import NONE_LABEL, ColorSet
from .errors import (
    CandidateMismatch,
    GoldMissing,
    InputError,
    MissingTemplate,
    NonFiniteLogit,
    TokenNotCandidate,
)
from .prompts import NA_TOKENS

_NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class MaskDistribution:
    """Per-slot log-probabilities over candidate labels; each slot's
    probabilities sum to 1 within 1e-9."""

    slots: tuple[dict[str, float], ...]

    def __post_init__(self):
        if not self.slots:
            raise InputError("distribution needs at least one slot")
        for k, slot in enumerate(self.slots):
            if not slot:
                raise InputError(f"slot {k} has no candidates")
            total = sum(math.exp(lp) for lp in slot.values())
            if abs(total - 1.0) > _NORMALIZATION_TOL:
                raise InputError(f"slot {k} probabilities sum to {total}, not 1")

    def log_probability(self, label: str, slot: int = 0) -> float:
        return self.slots[slot][label]

    def probability(self, label: str, slot: int = 0) -> float:
        return math.exp(self.slots[slot][label])

    def labels(self, slot: int = 0) -> set[str]:
        return set(self.slots[slot])


def _normalize_one(logits: Mapping[str, float]) -> dict[str, float]:
    if not logits:
        raise InputError("need at least one candidate")
    for label, v in logits.items():
        if not math.isfinite(v):
            raise NonFiniteLogit(f"logit for {label!r} is {v}")
    hi = max(logits.values())
    # summing in sorted-label order keeps results bit-identical no matter how
    # the mapping was assembled (e.g. a wire response with sorted keys)
    log_z = hi + math.log(sum(math.exp(logits[k] - hi) for k in sorted(logits)))
    return {label: v - log_z for label, v in logits.items()}


def normalize(logits: Mapping[str, float]) -> MaskDistribution:
    """Stable softmax over one mask slot's candidates."""
    return MaskDistribution(slots=(_normalize_one(logits),))


def normalize_slots(per_slot_logits: Sequence[Mapping[str, float]]) -> MaskDistribution:
    return MaskDistribution(slots=tuple(_normalize_one(s) for s in per_slot_logits))


@dataclass(frozen=True)
class GroundingResult:
    """Region probabilities plus the nominated target.

    predicted is None when every batch decoded "none"; the raw batch
    distributions are retained for audit.
    """

    per_region_prob: dict[int, float]
    predicted: int | None
    per_batch: tuple[MaskDistribution, ...]

    def fallback_prediction(self) -> int:
        """Highest-probability region regardless of "none" verdicts (used
        when a prediction must be produced for accuracy scoring)."""
        return min(self.per_region_prob, key=lambda i: (-self.per_region_prob[i], i))


def decode_grounding(plan, colors: ColorSet, batch_dists: Sequence[MaskDistribution]) -> GroundingResult:
    """Map batch distributions back onto proposal indices.

    Each batch's distribution must cover exactly its assigned color texts
    plus "none". The predicted region is the probability argmax over regions
    that beat their own batch's "none"; ties break toward the lowest index.
    """
    if len(batch_dists) != len(plan.batches):
        raise CandidateMismatch(
            f"{len(plan.batches)} batches but {len(batch_dists)} distributions"
        )
    per_region: dict[int, float] = {}
    qualified: list[int] = []
    for batch, dist in zip(plan.batches, batch_dists):
        expected = {colors[i].text for i in range(len(batch.members))} | {NONE_LABEL}
        if dist.labels() != expected:
            raise CandidateMismatch(
                f"batch candidates {sorted(dist.labels())} != expected {sorted(expected)}"
            )
        none_prob = dist.probability(NONE_LABEL)
        for pos, region_idx in enumerate(batch.members):
            p = dist.probability(colors[pos].text)
            per_region[region_idx] = p
            if p > none_prob:
                qualified.append(region_idx)
    predicted = None
    if qualified:
        predicted = min(qualified, key=lambda i: (-per_region[i], i))
    return GroundingResult(
        per_region_prob=per_region,
        predicted=predicted,
        per_batch=tuple(batch_dists),
    )


@dataclass(frozen=True)
class LossReport:
    total_nll: float
    per_instance: tuple[float, ...]


def grounding_nll(results: Sequence[tuple[GroundingResult, int]]) -> LossReport:
    """Negative log-likelihood of the gold regions (the tuning objective's
    value; no gradients here)."""
    terms = []
    for result, gold in results:
        if gold not in result.per_region_prob:
            raise GoldMissing(f"gold region {gold} absent from result")
        p = result.per_region_prob[gold]
        # a gold probability that underflowed to 0 is an infinite loss, not a crash
        terms.append(-math.log(p) if p > 0 else math.inf)
    return LossReport(total_nll=sum(terms), per_instance=tuple(terms))


@dataclass(frozen=True)
class RelationScoreTable:
    """Mean per-token log-probability per relation, ranked descending; the
    per-length no-relation placeholders are scored but never ranked."""

    scores: dict[str, float]
    ranked: tuple[str, ...]
    na_scores: dict[int, float]


def score_relations(
    dists_by_l: Mapping[int, MaskDistribution],
    vocab: Sequence[tuple[str, Sequence[str]]],
) -> RelationScoreTable:
    """Score each vocab relation under the template matching its token count:
    s(r) = mean over slots of log P(slot_i = token_i)."""
    for l, dist in dists_by_l.items():
        if len(dist.slots) != l:
            raise InputError(f"distribution for l={l} has {len(dist.slots)} slots")

    def mean_logprob(tokens: Sequence[str], context: str) -> float:
        l = len(tokens)
        if l not in dists_by_l:
            raise MissingTemplate(f"no distribution for {l}-token relation {context!r}")
        dist = dists_by_l[l]
        total = 0.0
        for i, tok in enumerate(tokens):
            if tok not in dist.slots[i]:
                raise TokenNotCandidate(f"token {tok!r} of {context!r} not in slot {i}")
            total += dist.log_probability(tok, slot=i)
        return total / l

    scores: dict[str, float] = {}
    for label, tokens in vocab:
        if label in scores:
            raise InputError(f"duplicate relation label {label!r}")
        scores[label] = mean_logprob(tokens, label)
    ranked = tuple(sorted(scores, key=lambda r: (-scores[r], r)))
    na_scores = {
        l: mean_logprob(NA_TOKENS[l], f"<no relation, l={l}>")
        for l in sorted(dists_by_l)
        if l in NA_TOKENS
    }
    return RelationScoreTable(scores=scores, ranked=ranked, na_scores=na_scores)


def training_targets(gold_tokens: Sequence[str] | None, l: int) -> tuple[str, ...]:
    """Token targets a tuning backend should reconstruct for the l-slot
    template: the gold relation where lengths match, the no-relation
    placeholder otherwise (and always, for unrelated pairs)."""
    if l not in NA_TOKENS:
        raise InputError(f"templates take 1-3 slots, got {l}")
    if gold_tokens is not None and len(gold_tokens) == l:
        return tuple(gold_tokens)
    return NA_TOKENS[l]
