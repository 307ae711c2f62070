"""Cross-modal prompt search: probe a backend with pure color blocks and pick
the (appearance, word) pairs it is most sensitive to.

For every candidate RGB the backend sees a uniform block plus the probe
template and assigns each candidate word a probability. Entries below the
discard threshold are zeroed; each surviving row elects its best word, and
each elected word is then paired with the visual that scores highest for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import ScoreRequest, ScoringBackend, response_to_distribution
from .colors import CandidateSets, Color, ColorSet, Rgb
from .errors import AllDiscarded, BackendError, InputError
from .prompts import CandidateTokenSeq, PromptText
from .raster import pure_color_block

DEFAULT_DISCARD_THRESHOLD = 0.8
DEFAULT_BLOCK_SIZE = 224


@dataclass(frozen=True)
class ScoreMatrix:
    """Decoding probabilities, one row per visual candidate, one column per
    word candidate."""

    visuals: tuple[Rgb, ...]
    texts: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        if self.scores.shape != (len(self.visuals), len(self.texts)):
            raise InputError(
                f"matrix shape {self.scores.shape} != "
                f"({len(self.visuals)}, {len(self.texts)})"
            )
        if np.any(~np.isfinite(self.scores)) or np.any(self.scores < 0) or np.any(self.scores > 1):
            raise InputError("matrix entries must be probabilities in [0, 1]")


def probe_scores(
    backend: ScoringBackend,
    candidates: CandidateSets,
    probe: PromptText,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> ScoreMatrix:
    """One backend call per visual candidate, all word candidates at once."""
    if block_size < 1:
        raise InputError(f"block_size must be >= 1, got {block_size}")
    if probe.mask_count != 1:
        raise InputError("probe template must have exactly one mask slot")
    slot = tuple(CandidateTokenSeq(label=t, tokens=(t,)) for t in candidates.texts)
    scores = np.zeros((len(candidates.visuals), len(candidates.texts)), dtype=np.float64)
    for row, rgb in enumerate(candidates.visuals):
        request = ScoreRequest(
            image=pure_color_block(rgb, block_size, block_size),
            prompt=probe.rendered,
            mask_count=1,
            candidates=(slot,),
            meta={"probe_rgb": f"{rgb.r},{rgb.g},{rgb.b}"},
        )
        try:
            dist = response_to_distribution(backend.score(request))
        except BackendError as e:
            raise type(e)(f"probing visual candidate {row} {rgb}: {e}") from e
        for col, text in enumerate(candidates.texts):
            if text not in dist.labels():
                raise InputError(f"backend response lost candidate (row {row}, col {col}: {text!r})")
            scores[row, col] = dist.probability(text)
    return ScoreMatrix(visuals=candidates.visuals, texts=candidates.texts, scores=scores)


def search(matrix: ScoreMatrix, discard_threshold: float = DEFAULT_DISCARD_THRESHOLD) -> ColorSet:
    """Select the color set from a probe matrix.

    Entries under the threshold are zeroed. Every row with a survivor elects
    the word with its largest score (first occurrence wins ties); elected
    words are deduplicated in election order. Each word is then paired with
    the row maximizing its column, and pairs are returned sorted by
    descending score. If two words elect the same visual, only the
    higher-scoring pair is kept so the result stays a valid color set.
    """
    if discard_threshold < 0:
        raise InputError(f"discard threshold must be >= 0, got {discard_threshold}")
    # thresholds above 1 are allowed and simply discard everything
    s = np.where(matrix.scores >= discard_threshold, matrix.scores, 0.0)
    if not np.any(s > 0):
        raise AllDiscarded(
            f"no (visual, text) candidate reached the {discard_threshold} decoding score"
        )
    elected: list[str] = []
    for row in range(s.shape[0]):
        if not np.any(s[row] > 0):
            continue
        text = matrix.texts[int(np.argmax(s[row]))]
        if text not in elected:
            elected.append(text)

    pairs: dict[Rgb, tuple[str, float]] = {}
    order: list[Rgb] = []
    for text in elected:
        col = matrix.texts.index(text)
        row = int(np.argmax(s[:, col]))
        score = float(s[row, col])
        if score <= 0:
            continue
        visual = matrix.visuals[row]
        if visual in pairs:
            if score > pairs[visual][1]:
                pairs[visual] = (text, score)
            continue
        pairs[visual] = (text, score)
        order.append(visual)

    chosen = [(visual, *pairs[visual]) for visual in order]
    chosen.sort(key=lambda item: -item[2])
    return ColorSet(tuple(Color(visual, text) for visual, text, _ in chosen))


# --- persistence -----------------------------------------------------------

def save_matrix(matrix: ScoreMatrix, path: str | Path) -> None:
    """Tab-separated, resumable: header of texts with a leading rgb column,
    one row per visual; floats via repr so reloads are exact."""
    lines = ["rgb\t" + "\t".join(matrix.texts)]
    for row, rgb in enumerate(matrix.visuals):
        cells = "\t".join(repr(float(v)) for v in matrix.scores[row])
        lines.append(f"{rgb.r},{rgb.g},{rgb.b}\t{cells}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_matrix(path: str | Path) -> ScoreMatrix:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("rgb\t"):
        raise InputError(f"{path}: not a score matrix file")
    texts = tuple(lines[0].split("\t")[1:])
    visuals = []
    rows = []
    for line in lines[1:]:
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(texts) + 1:
            raise InputError(f"{path}: row has {len(cells) - 1} scores, expected {len(texts)}")
        r, g, b = (int(p) for p in cells[0].split(","))
        visuals.append(Rgb(r, g, b))
        rows.append([float(c) for c in cells[1:]])
    return ScoreMatrix(
        visuals=tuple(visuals),
        texts=texts,
        scores=np.array(rows, dtype=np.float64).reshape(len(visuals), len(texts)),
    )
