"""Command-line entry point.

Subcommands: colorize, search-colors, ground, relations, evaluate. A config
file (flat TOML key/value) provides defaults, flags override it, and every
report echoes the effective configuration for provenance. Exit codes:
0 success, 2 validation error, 3 backend error, 4 empty result.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import tomli

from . import dataio, evalkit, pipeline
from . import search as prompt_search
from .backend import ChromaticOracle, RemoteBackend, ScoringBackend, StubHashBackend
from .batching import plan_batches
from .colors import PRESETS, CandidateSets, ColorSet, build_rgb_grid, load_color_set, load_color_table, save_color_set
from .errors import BackendError, CptError, EmptyResult, InputError
from .evalkit import SplitSpec
from .prompts import ProbeVariant, cps_probe_template
from .raster import PromptShape, save_png
from .scoring import grounding_nll

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_EMPTY = 4

PROFILES = {
    # full color set, one pass per up-to-six regions
    "toolkit": {"colors": "preset:cps", "capacity": 6},
    # single color, one region per forward pass
    "faithful": {"colors": "preset:cps-red", "capacity": 1},
}


@dataclass
class RunConfig:
    colors: str = "preset:cps"
    alpha: float = 0.5
    capacity: int = 6
    overlap_threshold: float = 0.5
    backend: str = "oracle"
    seed: int = 0
    k_shots: int = 0
    n_splits: int = 5
    val_size: int = 16
    probe_variant: str = "of"
    shape: str = "block"
    block_size: int = 224
    discard_threshold: float = 0.8
    radius: int = 30
    step: int = 5
    jobs: int = 1
    recall_ns: tuple[int, ...] = (50, 100)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.shape not in ("block", "mask"):
            raise InputError(f"shape must be block or mask, got {self.shape!r}")
        if self.probe_variant not in ("of", "in"):
            raise InputError(f"probe variant must be of or in, got {self.probe_variant!r}")
        if self.jobs < 1:
            raise InputError("jobs must be >= 1")

    def resolve_colors(self) -> ColorSet:
        if self.colors.startswith("preset:"):
            name = self.colors.split(":", 1)[1]
            if name not in PRESETS:
                raise InputError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
            return PRESETS[name]()
        if not Path(self.colors).exists():
            raise InputError(f"color set file {self.colors!r} does not exist")
        return load_color_set(self.colors)

    def resolve_backend(self) -> ScoringBackend:
        if self.backend == "oracle":
            oracle = ChromaticOracle()
            oracle.register_color_set(self.resolve_colors())
            return oracle
        if self.backend == "stub":
            return StubHashBackend()
        # "remote" defers entirely to the environment; an explicit URL can
        # still be overridden by it
        url = os.environ.get("CPT_BACKEND_URL", "" if self.backend == "remote" else self.backend)
        if not url:
            raise InputError("backend 'remote' needs CPT_BACKEND_URL to be set")
        if not url.startswith(("http://", "https://")):
            raise InputError(
                f"backend must be 'oracle', 'stub', 'remote' or an http(s) URL, got {url!r}"
            )
        return RemoteBackend(url)

    def probe(self):
        variant = ProbeVariant.OF_PHOTO if self.probe_variant == "of" else ProbeVariant.IN_PHOTO
        return cps_probe_template(variant)

    def prompt_shape(self) -> PromptShape:
        return PromptShape.BLOCK if self.shape == "block" else PromptShape.MASK

    def echo(self) -> dict:
        obj = dataclasses.asdict(self)
        obj["recall_ns"] = list(self.recall_ns)
        return obj


def load_config_file(path: str | Path) -> dict:
    with open(path, "rb") as f:
        try:
            return tomli.load(f)
        except tomli.TOMLDecodeError as e:
            raise InputError(f"{path}: {e}") from e


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    profile = getattr(args, "profile", None)
    if profile:
        if profile not in PROFILES:
            raise InputError(f"unknown profile {profile!r}; have {sorted(PROFILES)}")
        values.update(PROFILES[profile])
    if getattr(args, "config", None):
        file_values = load_config_file(args.config)
        unknown = set(file_values) - {f.name for f in dataclasses.fields(RunConfig)}
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
        values.update(file_values)
    for field in dataclasses.fields(RunConfig):
        flag = getattr(args, field.name, None)
        if flag is not None:
            values[field.name] = flag
    if "recall_ns" in values and not isinstance(values["recall_ns"], tuple):
        raw = values["recall_ns"]
        parts = raw.split(",") if isinstance(raw, str) else raw
        values["recall_ns"] = tuple(int(p) for p in parts)
    try:
        return RunConfig(**values)
    except TypeError as e:
        raise InputError(str(e)) from e


def _write_report(path: Path, payload: dict) -> None:
    dataio.atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=False) + "\n")


def _map_instances(items, fn, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --- subcommands -------------------------------------------------------------

def cmd_colorize(dataset: str | Path, out_dir: str | Path, config: RunConfig) -> int:
    """Emit the per-batch overlay images for inspection plus a manifest."""
    colors = config.resolve_colors()
    pipeline.check_color_compatibility(colors, config.capacity)
    instances = dataio.load_grounding(dataset)
    base_dir = Path(dataset).parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shape = config.prompt_shape()

    manifest_lines = []
    for inst in instances:
        image = pipeline.load_instance_image(inst.image_ref, base_dir)
        plan = plan_batches(inst.proposals, capacity=config.capacity,
                            overlap_threshold=config.overlap_threshold)
        for b, batch in enumerate(plan.batches):
            assignments = pipeline.batch_assignments(inst, batch.members, colors, shape, base_dir)
            colorized = pipeline.apply_visual_subprompt(image, assignments, config.alpha, shape)
            name = f"{inst.id}_batch{b}.png"
            save_png(colorized, out_dir / name)
            manifest_lines.append(json.dumps({
                "instance_id": inst.id,
                "batch": b,
                "file": name,
                "assignments": [
                    {"proposal": idx, "color": colors[pos].text,
                     "rgb": list(colors[pos].visual.as_tuple())}
                    for pos, idx in enumerate(batch.members)
                ],
            }, sort_keys=True))
    dataio.atomic_write_text(out_dir / "manifest.jsonl",
                             "".join(line + "\n" for line in manifest_lines))
    print(f"colorized {len(instances)} instances -> {out_dir}")
    return EXIT_OK


def cmd_search_colors(
    candidates_path: str | Path,
    out_dir: str | Path,
    config: RunConfig,
    backend: ScoringBackend | None = None,
) -> int:
    """Probe every visual candidate and select a color set; a persisted
    matrix is reused so interrupted searches resume without re-probing."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix_path = out_dir / "matrix.tsv"
    if matrix_path.exists():
        matrix = prompt_search.load_matrix(matrix_path)
        print(f"resuming from {matrix_path} ({len(matrix.visuals)} rows)")
    else:
        table = load_color_table(candidates_path)
        texts = tuple(table)
        visuals: list = []
        seen = set()
        for name in texts:
            for rgb in build_rgb_grid(table[name], radius=config.radius, step=config.step):
                if rgb not in seen:
                    seen.add(rgb)
                    visuals.append(rgb)
        candidates = CandidateSets(texts=texts, visuals=tuple(visuals))
        backend = backend or config.resolve_backend()
        matrix = prompt_search.probe_scores(backend, candidates, config.probe(), config.block_size)
        prompt_search.save_matrix(matrix, matrix_path)
    colors = prompt_search.search(matrix, discard_threshold=config.discard_threshold)
    save_color_set(colors, out_dir / "colors.tsv")
    _write_report(out_dir / "report.json", {
        "config": config.echo(),
        "n_visual_candidates": len(matrix.visuals),
        "n_text_candidates": len(matrix.texts),
        "selected": [
            {"text": c.text, "rgb": list(c.visual.as_tuple())} for c in colors
        ],
    })
    for c in colors:
        print(f"{c.text}\t{c.visual.r},{c.visual.g},{c.visual.b}")
    return EXIT_OK


def cmd_ground(
    dataset: str | Path,
    out_dir: str | Path,
    config: RunConfig,
    backend: ScoringBackend | None = None,
) -> int:
    """Full grounding pipeline: batch, colorize, score, decode, evaluate."""
    colors = config.resolve_colors()
    pipeline.check_color_compatibility(colors, config.capacity)
    backend = backend or config.resolve_backend()
    instances = dataio.load_grounding(dataset)
    base_dir = Path(dataset).parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shape = config.prompt_shape()

    def run_one(inst):
        try:
            image = pipeline.load_instance_image(inst.image_ref, base_dir)
        except (OSError, InputError) as e:
            return pipeline.error_record(inst, f"image load failed: {e}"), None
        try:
            grounded = pipeline.ground_instance(
                inst, image, colors, backend,
                alpha=config.alpha,
                capacity=config.capacity,
                overlap_threshold=config.overlap_threshold,
                shape=shape,
                base_dir=base_dir,
            )
        except (OSError, InputError) as e:
            # instance-level data problems (missing masks, degenerate boxes)
            # must not sink the run; backend failures still abort
            return pipeline.error_record(inst, str(e)), None
        return grounded.record, grounded.result

    outcomes = _map_instances(instances, run_one, config.jobs)
    by_id = {inst.id: (inst, rec, res) for inst, (rec, res) in zip(instances, outcomes)}
    ordered = [by_id[iid] for iid in sorted(by_id)]
    records = [rec for _, rec, _ in ordered]
    dataio.save_predictions(records, out_dir / "predictions.jsonl")

    pairs = [(rec.predicted_box, inst.gold_box) for inst, rec, _ in ordered]
    accuracy = evalkit.grounding_accuracy(pairs)
    nll_inputs = []
    for inst, rec, res in ordered:
        if res is None:
            continue
        gold_idx = max(
            range(len(inst.proposals)),
            key=lambda i: (evalkit.iou(inst.proposals[i], inst.gold_box), -i),
        )
        if evalkit.iou(inst.proposals[gold_idx], inst.gold_box) > 0.5:
            nll_inputs.append((res, gold_idx))
    loss = grounding_nll(nll_inputs) if nll_inputs else None
    _write_report(out_dir / "report.json", {
        "config": config.echo(),
        "backend_id": backend.backend_id,
        "n_instances": len(instances),
        "n_errors": sum(1 for r in records if r.error),
        "accuracy": accuracy,
        "total_nll": None if loss is None else loss.total_nll,
    })
    print(f"accuracy: {accuracy:.4f} over {len(instances)} instances")
    return EXIT_OK


def cmd_relations(
    dataset: str | Path,
    out_dir: str | Path,
    config: RunConfig,
    vocab_path: str | Path | None = None,
    backend: ScoringBackend | None = None,
) -> int:
    """Relation scoring and triplet ranking with recall reporting."""
    if vocab_path is None:
        raise InputError("relations needs --vocab (one relation label per line)")
    vocab = load_relation_vocab(vocab_path)
    colors = config.resolve_colors()
    backend = backend or config.resolve_backend()
    instances = dataio.load_relations(dataset)
    base_dir = Path(dataset).parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(inst):
        image = pipeline.load_instance_image(inst.image_ref, base_dir)
        return pipeline.score_relation_instance(
            inst, image, colors, backend, alpha=config.alpha, vocab=vocab,
        )

    predictions = _map_instances(instances, run_one, config.jobs)
    predictions.sort(key=lambda p: p.instance.id)

    lines = []
    for pred in predictions:
        lines.append(json.dumps({
            "id": pred.instance.id,
            "image": pred.instance.image_ref,
            "subject_id": pred.instance.subject_id(),
            "object_id": pred.instance.object_id(),
            "scores": dict(sorted(pred.table.scores.items())),
            "ranked": list(pred.table.ranked),
            "na_scores": {str(l): v for l, v in sorted(pred.table.na_scores.items())},
        }, sort_keys=True))
    dataio.atomic_write_text(out_dir / "triplets.jsonl",
                             "".join(line + "\n" for line in lines))

    ranked = pipeline.ranked_triplets_by_image(predictions)
    gold = pipeline.gold_triplets_by_image(instances)
    metrics = {}
    for n in config.recall_ns:
        metrics[f"recall@{n}"] = evalkit.recall_at_n(ranked, gold, n)
        metrics[f"mean_recall@{n}"] = evalkit.mean_recall_at_n(ranked, gold, n)
    _write_report(out_dir / "report.json", {
        "config": config.echo(),
        "backend_id": backend.backend_id,
        "n_instances": len(instances),
        "metrics": dict(sorted(metrics.items())),
    })
    for k in sorted(metrics):
        print(f"{k}: {metrics[k]:.4f}")
    return EXIT_OK


def cmd_evaluate(
    predictions_path: str | Path,
    dataset: str | Path,
    out_path: str | Path,
    config: RunConfig,
) -> int:
    """Metric report over seeded validation splits plus the full set."""
    instances = {i.id: i for i in dataio.load_grounding(dataset)}
    records = dataio.load_predictions(predictions_path)
    for rec in records:
        if rec.instance_id not in instances:
            raise InputError(f"prediction references unknown instance {rec.instance_id!r}")
    by_id = {rec.instance_id: rec for rec in records}

    def accuracy_over(ids: Sequence[str]) -> float:
        pairs = []
        for iid in ids:
            rec = by_id.get(iid)
            pairs.append((rec.predicted_box if rec else None, instances[iid].gold_box))
        return evalkit.grounding_accuracy(pairs)

    spec = SplitSpec(
        k_shots=config.k_shots,
        seed=config.seed,
        n_splits=config.n_splits,
        val_size=config.val_size,
    )
    splits = evalkit.sample_splits(sorted(instances), spec)
    per_split = [{"accuracy": accuracy_over(val)} for _, val in splits]
    report = evalkit.aggregate(per_split)
    payload = {
        "config": config.echo(),
        "full_accuracy": accuracy_over(sorted(instances)),
        "report": json.loads(evalkit.report_to_json(report)),
    }
    _write_report(Path(out_path), payload)
    print(evalkit.format_report(report))
    return EXIT_OK


def load_relation_vocab(path: str | Path) -> list[tuple[str, list[str]]]:
    """One relation label per line; tokens are the whitespace-split words."""
    vocab = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        label = line.strip()
        if not label or label.startswith("#"):
            continue
        vocab.append((label, label.split()))
    return vocab


# --- argument wiring -----------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file with RunConfig keys")
    p.add_argument("--profile", choices=sorted(PROFILES),
                   help="named defaults: toolkit (capacity 6, full set) or faithful (capacity 1, single color)")
    p.add_argument("--colors", dest="colors", help="preset:<name> or a name<TAB>r,g,b file")
    p.add_argument("--alpha", type=float)
    p.add_argument("--capacity", type=int)
    p.add_argument("--overlap-threshold", dest="overlap_threshold", type=float)
    p.add_argument("--backend",
                   help="oracle | stub | remote | http(s) URL (CPT_BACKEND_URL overrides the URL)")
    p.add_argument("--seed", type=int)
    p.add_argument("--k-shots", dest="k_shots", type=int)
    p.add_argument("--n-splits", dest="n_splits", type=int)
    p.add_argument("--val-size", dest="val_size", type=int)
    p.add_argument("--probe-variant", dest="probe_variant", choices=["of", "in"])
    p.add_argument("--shape", choices=["block", "mask"])
    p.add_argument("--block-size", dest="block_size", type=int)
    p.add_argument("--discard-threshold", dest="discard_threshold", type=float)
    p.add_argument("--radius", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--recall-at", dest="recall_ns", help="comma-separated N values for recall@N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("colorize", help="write per-batch overlay images")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)

    p = sub.add_parser("search-colors", help="probe color candidates and select a color set")
    p.add_argument("--candidates", required=True, help="name<TAB>r,g,b file of word candidates")
    p.add_argument("--out", required=True)
    _add_config_flags(p)

    p = sub.add_parser("ground", help="run the grounding pipeline over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)

    p = sub.add_parser("relations", help="score and rank relations for object pairs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab", required=True, help="one relation label per line")
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="split-based metric report for saved predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = build_config(args)
        if args.command == "colorize":
            return cmd_colorize(args.dataset, args.out, config)
        if args.command == "search-colors":
            return cmd_search_colors(args.candidates, args.out, config)
        if args.command == "ground":
            return cmd_ground(args.dataset, args.out, config)
        if args.command == "relations":
            return cmd_relations(args.dataset, args.out, config, vocab_path=args.vocab)
        if args.command == "evaluate":
            return cmd_evaluate(args.predictions, args.dataset, args.out, config)
        raise InputError(f"unknown command {args.command!r}")
    except EmptyResult as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except BackendError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (InputError, CptError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
