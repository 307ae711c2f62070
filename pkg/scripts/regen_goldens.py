#!/usr/bin/env python3
"""Regenerate the checked-in golden files under tests/golden/.

Run from the repo root after an intentional format change:

    python3 scripts/regen_goldens.py

Golden files pin two external surfaces: the canonical wire body of a score
request (tests/golden/wire_request.json) and the seeded split sampler's
output for k = 1..16 (tests/golden/splits/kNN.json).
"""

import json
from pathlib import Path

from cpt.backend import request_wire_body, ScoreRequest
from cpt.colors import Rgb, preset_cps_colors
from cpt.evalkit import SplitSpec, sample_splits
from cpt.prompts import CandidateTokenSeq, grounding_template
from cpt.raster import pure_color_block

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "tests" / "golden"

SPLIT_SEED = 1234
SPLIT_POOL = [f"inst_{i:04d}" for i in range(100)]


def golden_wire_request() -> ScoreRequest:
    slot = [CandidateTokenSeq(label=c.text, tokens=(c.text,)) for c in preset_cps_colors()]
    slot.append(CandidateTokenSeq(label="none", tokens=("none",)))
    return ScoreRequest(
        image=pure_color_block(Rgb(240, 0, 30), 2, 2),
        prompt=grounding_template("the small dog").rendered,
        mask_count=1,
        candidates=(tuple(slot),),
        meta={"instance_id": "a", "alpha": "0.5"},
    )


def golden_split_bytes(k: int) -> bytes:
    spec = SplitSpec(k_shots=k, seed=SPLIT_SEED, n_splits=5, val_size=16)
    splits = sample_splits(SPLIT_POOL, spec)
    obj = {
        "k_shots": k,
        "n_splits": spec.n_splits,
        "pool_size": len(SPLIT_POOL),
        "seed": spec.seed,
        "splits": [{"train": train, "val": val} for train, val in splits],
        "val_size": spec.val_size,
    }
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def main():
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    (GOLDEN_DIR / "wire_request.json").write_bytes(request_wire_body(golden_wire_request()))
    splits_dir = GOLDEN_DIR / "splits"
    splits_dir.mkdir(exist_ok=True)
    for k in range(1, 17):
        (splits_dir / f"k{k:02d}.json").write_bytes(golden_split_bytes(k))
    print(f"wrote goldens under {GOLDEN_DIR}")


if __name__ == "__main__":
    main()
