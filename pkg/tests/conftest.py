import math

import pytest

from cpt.backend import ScoreResponse, ScoringBackend
from cpt.colors import CandidateSets, Rgb, build_rgb_grid, preset_cps_colors


class PlantedProbeBackend(ScoringBackend):
    """Synthetic probe surface with known optima.

    For a planted table {text: rgb*}, a pure block of color v scores
    max(0, 1 - L1(v, rgb*) / 90) for each candidate text. Scores over the
    candidates do not sum to 1 (a real model spreads mass over its whole
    vocabulary), so the remainder is reported under a filler label that the
    probe simply never asks about.
    """

    backend_id = "planted-probe"

    def __init__(self, planted: dict[str, Rgb]):
        self.planted = planted
        self.calls = 0

    @staticmethod
    def surface(v: Rgb, target: Rgb) -> float:
        l1 = abs(v.r - target.r) + abs(v.g - target.g) + abs(v.b - target.b)
        return max(0.0, 1.0 - l1 / 90.0)

    def score(self, request):
        self.calls += 1
        px = request.image.pixels[0, 0]
        v = Rgb(int(px[0]), int(px[1]), int(px[2]))
        logprobs = {}
        total = 0.0
        for cand in request.candidates[0]:
            p = self.surface(v, self.planted[cand.label])
            total += p
            logprobs[cand.label] = math.log(max(p, 1e-300))
        logprobs["other"] = math.log(max(1.0 - total, 1e-300))
        return ScoreResponse(per_slot_logprobs=(logprobs,), backend_id=self.backend_id)


class ExplodingBackend(ScoringBackend):
    """Trips if the pipeline asks for a forward pass at all."""

    backend_id = "exploding"

    def score(self, request):
        raise AssertionError("backend should not have been called")


@pytest.fixture
def planted_cps():
    """The six searched colors as a planted surface plus candidate pools
    (grids of radius 30 / step 5 around each planted appearance)."""
    planted = {c.text: c.visual for c in preset_cps_colors()}
    texts = tuple(planted)
    seen: set[Rgb] = set()
    visuals: list[Rgb] = []
    for rgb in planted.values():
        for candidate in build_rgb_grid(rgb, radius=30, step=5):
            if candidate not in seen:
                seen.add(candidate)
                visuals.append(candidate)
    return planted, CandidateSets(texts=texts, visuals=tuple(visuals))
