#!/usr/bin/env python3
"""Prompt-search demo on a synthetic scoring surface.

A planted backend pretends the model is most sensitive to six known
(appearance, word) pairs; the search sweeps grids of RGB candidates around
each standard value and should recover the planted pairs exactly.

    python3 scripts/run_color_search_demo.py --radius 30 --step 5
"""

import argparse
import math
import time

from cpt.backend import ScoreResponse, ScoringBackend
from cpt.colors import CandidateSets, Rgb, build_rgb_grid, preset_cps_colors
from cpt.prompts import cps_probe_template
from cpt.search import probe_scores, search


class PlantedBackend(ScoringBackend):
    backend_id = "planted-demo"

    def __init__(self, planted: dict[str, Rgb]):
        self.planted = planted

    def score(self, request):
        px = request.image.pixels[0, 0]
        v = Rgb(int(px[0]), int(px[1]), int(px[2]))
        logprobs = {}
        total = 0.0
        for cand in request.candidates[0]:
            t = self.planted[cand.label]
            l1 = abs(v.r - t.r) + abs(v.g - t.g) + abs(v.b - t.b)
            p = max(0.0, 1.0 - l1 / 90.0)
            total += p
            logprobs[cand.label] = math.log(max(p, 1e-300))
        logprobs["other"] = math.log(max(1.0 - total, 1e-300))
        return ScoreResponse(per_slot_logprobs=(logprobs,), backend_id=self.backend_id)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--radius", type=int, default=30)
    parser.add_argument("--step", type=int, default=5)
    parser.add_argument("--threshold", type=float, default=0.8)
    args = parser.parse_args()

    planted = {c.text: c.visual for c in preset_cps_colors()}
    seen: set[Rgb] = set()
    visuals: list[Rgb] = []
    for rgb in planted.values():
        for cand in build_rgb_grid(rgb, radius=args.radius, step=args.step):
            if cand not in seen:
                seen.add(cand)
                visuals.append(cand)
    candidates = CandidateSets(texts=tuple(planted), visuals=tuple(visuals))
    print(f"{len(candidates.visuals)} visual x {len(candidates.texts)} word candidates")

    started = time.monotonic()
    matrix = probe_scores(PlantedBackend(planted), candidates, cps_probe_template())
    colors = search(matrix, discard_threshold=args.threshold)
    elapsed = time.monotonic() - started

    print(f"search took {elapsed:.2f}s; selected:")
    recovered = 0
    for c in colors:
        mark = "*" if planted.get(c.text) == c.visual else " "
        recovered += mark == "*"
        print(f"  {mark} {c.text:8s} {c.visual}")
    print(f"recovered {recovered}/{len(planted)} planted pairs")


if __name__ == "__main__":
    main()
