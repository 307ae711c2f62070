"""Fill-in-the-blank text templates.

Rendered prompts are plain strings carrying literal `[CLS]`, `[MASK]` and
`[SEP]` sentinels; mapping them onto a tokenizer's special tokens is the
scoring backend's job, which keeps the pipeline tokenizer-agnostic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import BadMaskCount, EmptyQuery, EmptyText, InputError

CLS = "[CLS]"
MASK = "[MASK]"
SEP = "[SEP]"

# Per-length stand-ins meaning "no relation holds under this template length".
NA_TOKENS = {1: ("irrelevant",), 2: ("no", "relation"), 3: ("no", "relation", "with")}
RELATION_LENGTHS = (1, 2, 3)


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class MaskSlot:
    index: int


@dataclass(frozen=True)
class QuerySlot:
    text: str


Segment = Literal | MaskSlot | QuerySlot


@dataclass(frozen=True)
class PromptText:
    """Template body between the [CLS]/[SEP] framing, plus its rendering."""

    segments: tuple[Segment, ...]

    @property
    def rendered(self) -> str:
        parts = [CLS]
        for seg in self.segments:
            if isinstance(seg, MaskSlot):
                parts.append(MASK)
            else:
                parts.append(seg.text)
        parts.append(SEP)
        return " ".join(parts)

    @property
    def mask_count(self) -> int:
        return sum(isinstance(s, MaskSlot) for s in self.segments)

    def mask_indices(self) -> list[int]:
        return [s.index for s in self.segments if isinstance(s, MaskSlot)]


def _build(segments: list[Segment]) -> PromptText:
    # Number mask slots 0..l-1 left to right regardless of caller input.
    numbered: list[Segment] = []
    next_index = 0
    for seg in segments:
        if isinstance(seg, MaskSlot):
            numbered.append(MaskSlot(next_index))
            next_index += 1
        else:
            numbered.append(seg)
    return PromptText(tuple(numbered))


def grounding_template(query: str) -> PromptText:
    """`[CLS] {query} is in [MASK] color [SEP]`; query inserted verbatim."""
    if not query.strip():
        raise EmptyQuery("query is empty")
    return _build([QuerySlot(query), Literal("is in"), MaskSlot(0), Literal("color")])


class ProbeVariant(enum.Enum):
    OF_PHOTO = "of"
    IN_PHOTO = "in"


def cps_probe_template(variant: ProbeVariant = ProbeVariant.OF_PHOTO) -> PromptText:
    """Probe asked about a pure color block during prompt search."""
    return _build([Literal(f"a photo {variant.value}"), MaskSlot(0), Literal("color")])


def relation_template(
    subject_text: str,
    subject_color: str,
    object_text: str,
    object_color: str,
    l: int,
) -> PromptText:
    """`[CLS] The {s} in {c_i} color is [MASK]*l the {o} in {c_j} color [SEP]`."""
    if l not in RELATION_LENGTHS:
        raise BadMaskCount(f"relation templates take 1-3 mask slots, got {l}")
    for name, value in [
        ("subject_text", subject_text),
        ("subject_color", subject_color),
        ("object_text", object_text),
        ("object_color", object_color),
    ]:
        if not value or not value.strip():
            raise EmptyText(f"{name} is empty")
    segments: list[Segment] = [Literal(f"The {subject_text} in {subject_color} color is")]
    segments.extend(MaskSlot(i) for i in range(l))
    segments.append(Literal(f"the {object_text} in {object_color} color"))
    return _build(segments)


@dataclass(frozen=True)
class CandidateTokenSeq:
    """A candidate answer: display label plus the tokens filling mask slots."""

    label: str
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise InputError(f"candidate {self.label!r} has no tokens")
        if any(not t or " " in t for t in self.tokens):
            raise InputError(f"candidate {self.label!r} has malformed tokens {self.tokens}")


def na_relation(l: int) -> CandidateTokenSeq:
    if l not in NA_TOKENS:
        raise BadMaskCount(f"no-relation placeholder defined for 1-3 tokens, got {l}")
    tokens = NA_TOKENS[l]
    return CandidateTokenSeq(label=" ".join(tokens), tokens=tokens)


def parse_prompt(rendered: str) -> PromptText:
    """Recover template structure from a rendered string.

    Mask slots come back exactly; literal words between them merge into single
    Literal runs (a verbatim query is indistinguishable from template text in
    the flat form, so QuerySlot boundaries are not recoverable).
    """
    tokens = rendered.split(" ")
    if len(tokens) < 2 or tokens[0] != CLS or tokens[-1] != SEP:
        raise InputError(f"prompt must be framed by {CLS} ... {SEP}: {rendered!r}")
    body = tokens[1:-1]
    if CLS in body or SEP in body:
        raise InputError(f"stray sentinel inside prompt body: {rendered!r}")
    segments: list[Segment] = []
    run: list[str] = []
    for tok in body:
        if tok == MASK:
            if run:
                segments.append(Literal(" ".join(run)))
                run = []
            segments.append(MaskSlot(0))
        else:
            run.append(tok)
    if run:
        segments.append(Literal(" ".join(run)))
    return _build(segments)
