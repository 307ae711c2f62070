#!/usr/bin/env python3
"""Generate a synthetic grounding dataset (gray scenes, hidden targets).

    python3 scripts/make_synthetic_dataset.py --out sample_data/grounding50 \
        --scenes 50 --max-proposals 6 --seed 20240222
"""

import argparse

from cpt.dataio import generate_synthetic_grounding


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--scenes", type=int, default=50)
    parser.add_argument("--max-proposals", type=int, default=6)
    parser.add_argument("--seed", type=int, default=20240222)
    parser.add_argument("--alpha", type=float, default=0.5)
    args = parser.parse_args()
    instances = generate_synthetic_grounding(
        args.out, n_scenes=args.scenes, max_proposals=args.max_proposals,
        seed=args.seed, alpha=args.alpha,
    )
    total = sum(len(i.proposals) for i in instances)
    print(f"wrote {len(instances)} scenes ({total} proposals) under {args.out}")


if __name__ == "__main__":
    main()
