import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from cpt import cli
from cpt.backend import ScoreResponse, ScoringBackend
from cpt.cli import (
    EXIT_BACKEND,
    EXIT_EMPTY,
    EXIT_OK,
    EXIT_VALIDATION,
    RunConfig,
    build_config,
    build_parser,
    main,
)
from cpt.colors import preset_cps_colors
from cpt.dataio import generate_synthetic_grounding, load_predictions
from cpt.errors import InputError

from conftest import ExplodingBackend, PlantedProbeBackend


@pytest.fixture
def synth(tmp_path):
    data_dir = tmp_path / "data"
    instances = generate_synthetic_grounding(data_dir, n_scenes=8, max_proposals=6, seed=21)
    return data_dir / "data.jsonl", instances


def read_report(out_dir):
    return json.loads((Path(out_dir) / "report.json").read_text())


def test_cmd_ground_synthetic_oracle(synth, tmp_path):
    dataset, instances = synth
    out = tmp_path / "out"
    assert cli.cmd_ground(dataset, out, RunConfig()) == EXIT_OK
    report = read_report(out)
    assert report["accuracy"] == 1.0
    assert report["config"]["alpha"] == 0.5
    assert report["backend_id"] == "chromatic-oracle"
    records = load_predictions(out / "predictions.jsonl")
    assert len(records) == len(instances)
    assert [r.instance_id for r in records] == sorted(i.id for i in instances)


def test_cmd_ground_zero_shot_needs_no_training_data(synth, tmp_path):
    dataset, _ = synth
    config = RunConfig(k_shots=0)
    assert cli.cmd_ground(dataset, tmp_path / "o", config) == EXIT_OK


def test_cmd_ground_missing_image_keeps_going(synth, tmp_path):
    dataset, instances = synth
    # delete one scene's image
    (dataset.parent / instances[2].image_ref).unlink()
    out = tmp_path / "out"
    assert cli.cmd_ground(dataset, out, RunConfig()) == EXIT_OK
    records = {r.instance_id: r for r in load_predictions(out / "predictions.jsonl")}
    bad = records[instances[2].id]
    assert bad.error is not None and bad.predicted_box is None
    assert read_report(out)["n_errors"] == 1
    # the others still decoded
    assert sum(1 for r in records.values() if r.error is None) == len(instances) - 1


def test_cmd_ground_deterministic_outputs(synth, tmp_path):
    dataset, _ = synth
    cli.cmd_ground(dataset, tmp_path / "a", RunConfig())
    cli.cmd_ground(dataset, tmp_path / "b", RunConfig())
    strip = lambda p: [
        {k: v for k, v in json.loads(line).items() if k != "elapsed_ms"}
        for line in Path(p).read_text().splitlines()
    ]
    assert strip(tmp_path / "a/predictions.jsonl") == strip(tmp_path / "b/predictions.jsonl")


def test_cmd_ground_capacity_above_colors_is_validation_error(synth, tmp_path):
    dataset, _ = synth
    rc = main(["ground", "--dataset", str(dataset), "--out", str(tmp_path / "o"),
               "--capacity", "9"])
    assert rc == EXIT_VALIDATION


def test_cmd_colorize_single_instance(tmp_path):
    data_dir = tmp_path / "d"
    generate_synthetic_grounding(data_dir, n_scenes=1, max_proposals=1, seed=5)
    out = tmp_path / "out"
    assert cli.cmd_colorize(data_dir / "data.jsonl", out, RunConfig()) == EXIT_OK
    images = sorted(p.name for p in out.glob("*.png"))
    manifest = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
    assert len(images) == 1 and len(manifest) == 1
    assert manifest[0]["file"] == images[0]
    assert manifest[0]["assignments"][0]["color"] == "red"


def test_cmd_colorize_capacity_one_three_proposals(tmp_path):
    data_dir = tmp_path / "d"
    # force a scene with exactly 3 proposals
    insts = []
    for seed in range(100):
        insts = generate_synthetic_grounding(tmp_path / f"d{seed}", 1, 6, seed=seed)
        if len(insts[0].proposals) == 3:
            data_dir = tmp_path / f"d{seed}"
            break
    assert len(insts[0].proposals) == 3
    out = tmp_path / "out"
    config = RunConfig(capacity=1)
    assert cli.cmd_colorize(data_dir / "data.jsonl", out, config) == EXIT_OK
    assert len(list(out.glob("*.png"))) == 3  # one image per batch


def test_cmd_colorize_rerun_identical_bytes(tmp_path):
    data_dir = tmp_path / "d"
    generate_synthetic_grounding(data_dir, n_scenes=2, max_proposals=4, seed=9)
    cli.cmd_colorize(data_dir / "data.jsonl", tmp_path / "a", RunConfig())
    cli.cmd_colorize(data_dir / "data.jsonl", tmp_path / "b", RunConfig())
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def write_candidates(path, planted):
    lines = [f"{t}\t{v.r},{v.g},{v.b}" for t, v in planted.items()]
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")


def test_cmd_search_colors_planted_recovery(tmp_path):
    planted = {c.text: c.visual for c in preset_cps_colors()}
    cand_file = tmp_path / "cands.tsv"
    write_candidates(cand_file, planted)
    out = tmp_path / "out"
    config = RunConfig(radius=10, step=5, block_size=8)
    backend = PlantedProbeBackend(planted)
    assert cli.cmd_search_colors(cand_file, out, config, backend=backend) == EXIT_OK
    report = read_report(out)
    got = {(r["text"], tuple(r["rgb"])) for r in report["selected"]}
    assert got == {(t, v.as_tuple()) for t, v in planted.items()}
    assert (out / "matrix.tsv").exists() and (out / "colors.tsv").exists()


def test_cmd_search_colors_resume_skips_probing(tmp_path):
    planted = {c.text: c.visual for c in preset_cps_colors()}
    cand_file = tmp_path / "cands.tsv"
    write_candidates(cand_file, planted)
    out = tmp_path / "out"
    config = RunConfig(radius=5, step=5, block_size=8)
    cli.cmd_search_colors(cand_file, out, config, backend=PlantedProbeBackend(planted))
    first = (out / "colors.tsv").read_bytes()
    # resume must not touch the backend at all
    assert cli.cmd_search_colors(cand_file, out, config, backend=ExplodingBackend()) == EXIT_OK
    assert (out / "colors.tsv").read_bytes() == first


def test_cmd_search_colors_threshold_above_one_is_empty(tmp_path):
    planted = {"red": preset_cps_colors()[0].visual}
    cand_file = tmp_path / "cands.tsv"
    write_candidates(cand_file, planted)
    rc = main_with_backend(
        ["search-colors", "--candidates", str(cand_file), "--out", str(tmp_path / "o"),
         "--radius", "5", "--step", "5", "--block-size", "8", "--discard-threshold", "1.1"],
        PlantedProbeBackend(planted),
    )
    assert rc == EXIT_EMPTY


def main_with_backend(argv, backend):
    """Drive main() but swap in a test backend."""
    args = build_parser().parse_args(argv)
    config = build_config(args)
    try:
        if args.command == "search-colors":
            return cli.cmd_search_colors(args.candidates, args.out, config, backend=backend)
        if args.command == "ground":
            return cli.cmd_ground(args.dataset, args.out, config, backend=backend)
        raise AssertionError(args.command)
    except cli.EmptyResult:
        return EXIT_EMPTY
    except cli.BackendError:
        return EXIT_BACKEND


class RiggedRelationBackend(ScoringBackend):
    """Prefers a planted token per slot, everything else uniform-ish."""

    backend_id = "rigged"

    def __init__(self, preferred):
        self.preferred = preferred  # list of tokens per slot position

    def score(self, request):
        slots = []
        for k, slot in enumerate(request.candidates):
            logits = {
                c.label: (3.0 if c.label == self.preferred[k] else -1.0 - 0.01 * i)
                for i, c in enumerate(slot)
            }
            hi = max(logits.values())
            z = hi + math.log(sum(math.exp(v - hi) for v in logits.values()))
            slots.append({l: v - z for l, v in logits.items()})
        return ScoreResponse(per_slot_logprobs=tuple(slots), backend_id=self.backend_id)


def relation_dataset(tmp_path):
    from cpt.raster import RasterImage, save_png
    from cpt.colors import Rgb
    img_dir = tmp_path / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    save_png(RasterImage.filled(Rgb(128, 128, 128), 48, 48), img_dir / "i1.png")
    records = [{
        "id": "p1", "image": "images/i1.png",
        "subject": {"text": "man", "box": [2, 2, 10, 10], "box_id": "b1"},
        "object": {"text": "horse", "box": [20, 20, 12, 12], "box_id": "b2"},
        "gold_relations": ["riding"],
    }]
    path = tmp_path / "rel.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("riding\nwearing\nwalking on\n", encoding="utf-8")
    return path, vocab


def test_cmd_relations_gold_first(tmp_path):
    dataset, vocab = relation_dataset(tmp_path)
    out = tmp_path / "out"
    backend = RiggedRelationBackend(["riding", "on"])
    config = RunConfig(recall_ns=(1, 2, 5))
    rc = cli.cmd_relations(dataset, out, config, vocab_path=vocab, backend=backend)
    assert rc == EXIT_OK
    report = read_report(out)
    assert report["metrics"]["recall@1"] == 1.0
    assert report["metrics"]["mean_recall@1"] == 1.0
    rows = [json.loads(l) for l in (out / "triplets.jsonl").read_text().splitlines()]
    assert rows[0]["ranked"][0] == "riding"
    # placeholders are scored separately, never ranked
    assert "irrelevant" not in rows[0]["ranked"]
    assert set(rows[0]["na_scores"]) == {"1", "2"}


def test_cmd_relations_requires_vocab(tmp_path):
    dataset, _ = relation_dataset(tmp_path)
    with pytest.raises(InputError):
        cli.cmd_relations(dataset, tmp_path / "o", RunConfig(), vocab_path=None)


def test_cmd_evaluate_five_splits(synth, tmp_path):
    dataset, _ = synth
    out = tmp_path / "ground"
    cli.cmd_ground(dataset, out, RunConfig())
    report_path = tmp_path / "eval.json"
    config = RunConfig(n_splits=5, val_size=3, seed=11)
    rc = cli.cmd_evaluate(out / "predictions.jsonl", dataset, report_path, config)
    assert rc == EXIT_OK
    payload = json.loads(report_path.read_text())
    assert len(payload["report"]["per_split"]) == 5
    assert payload["full_accuracy"] == 1.0
    assert payload["report"]["mean"]["accuracy"] == 1.0
    assert payload["report"]["std"]["accuracy"] == 0.0

    # fixed seed -> identical report
    report2 = tmp_path / "eval2.json"
    cli.cmd_evaluate(out / "predictions.jsonl", dataset, report2, config)
    assert report_path.read_bytes() == report2.read_bytes()


def test_cmd_evaluate_single_split_std_zero(synth, tmp_path):
    dataset, _ = synth
    out = tmp_path / "ground"
    cli.cmd_ground(dataset, out, RunConfig())
    report_path = tmp_path / "eval.json"
    cli.cmd_evaluate(out / "predictions.jsonl", dataset, report_path,
                     RunConfig(n_splits=1, val_size=4))
    payload = json.loads(report_path.read_text())
    assert len(payload["report"]["per_split"]) == 1
    assert payload["report"]["std"]["accuracy"] == 0.0


def test_cmd_evaluate_unknown_prediction_id(synth, tmp_path):
    dataset, _ = synth
    preds = tmp_path / "p.jsonl"
    preds.write_text(json.dumps({"id": "ghost", "predicted_box": None}) + "\n")
    rc = main(["evaluate", "--predictions", str(preds), "--dataset", str(dataset),
               "--out", str(tmp_path / "r.json")])
    assert rc == EXIT_VALIDATION


def test_config_file_and_flag_overrides(tmp_path, synth):
    dataset, _ = synth
    cfg = tmp_path / "run.toml"
    cfg.write_text('alpha = 0.45\ncapacity = 3\nbackend = "oracle"\n')
    args = build_parser().parse_args([
        "ground", "--dataset", str(dataset), "--out", str(tmp_path / "o"),
        "--config", str(cfg), "--capacity", "2",
    ])
    config = build_config(args)
    assert config.alpha == 0.45
    assert config.capacity == 2  # flag beats file
    assert config.backend == "oracle"


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("nonsense = 1\n")
    args = build_parser().parse_args(["ground", "--dataset", "x", "--out", "y",
                                      "--config", str(cfg)])
    with pytest.raises(InputError):
        build_config(args)


def test_profiles():
    args = build_parser().parse_args(["ground", "--dataset", "x", "--out", "y",
                                      "--profile", "faithful"])
    config = build_config(args)
    assert config.capacity == 1
    assert config.colors == "preset:cps-red"
    assert len(config.resolve_colors()) == 1
    toolkit = build_config(build_parser().parse_args(
        ["ground", "--dataset", "x", "--out", "y", "--profile", "toolkit"]))
    assert toolkit.capacity == 6
    assert len(toolkit.resolve_colors()) == 6


def test_backend_env_override(monkeypatch):
    monkeypatch.setenv("CPT_BACKEND_URL", "http://example.test:9")
    config = RunConfig(backend="http://original:1")
    remote = config.resolve_backend()
    assert remote.base_url == "http://example.test:9"
    monkeypatch.delenv("CPT_BACKEND_URL")
    assert RunConfig(backend="http://original:1").resolve_backend().base_url == "http://original:1"


def test_backend_spec_validation():
    with pytest.raises(InputError):
        RunConfig(backend="carrier-pigeon").resolve_backend()
    assert RunConfig(backend="stub").resolve_backend().backend_id == "stub-hash"


def test_exit_code_validation_error(tmp_path):
    rc = main(["ground", "--dataset", str(tmp_path / "missing.jsonl"),
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION


def test_exit_code_backend_error(synth, tmp_path):
    dataset, _ = synth
    # remote URL that refuses connections -> backend error after retries
    rc = main(["ground", "--dataset", str(dataset), "--out", str(tmp_path / "o"),
               "--backend", "http://127.0.0.1:9"])
    assert rc == EXIT_BACKEND


def test_console_script_help_runs():
    exe = shutil.which("cpt")
    if exe is None:
        cmd = [sys.executable, "-m", "cpt.cli", "--help"]
    else:
        cmd = [exe, "--help"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0
    assert "search-colors" in proc.stdout


def test_cmd_ground_mask_shape_end_to_end(tmp_path):
    import numpy as np
    from cpt.dataio import encode_mask_rle, grounding_record
    from cpt.raster import SegmentMask, load_png, save_png
    import dataclasses

    data_dir = tmp_path / "d"
    instances = generate_synthetic_grounding(data_dir, n_scenes=4, max_proposals=3, seed=13)
    masked = []
    for n, inst in enumerate(instances):
        image = load_png(data_dir / inst.image_ref)
        refs = []
        for i, box in enumerate(inst.proposals):
            bits = np.zeros((image.height, image.width), dtype=np.bool_)
            bits[int(box.y):int(box.y + box.h), int(box.x):int(box.x + box.w)] = True
            if n == 0 and i == 0:
                # exercise the PNG reference path too
                from PIL import Image
                name = f"images/mask_{inst.id}_{i}.png"
                Image.fromarray(bits.astype("uint8") * 255).save(data_dir / name)
                refs.append(name)
            else:
                refs.append(encode_mask_rle(SegmentMask(bits)))
        masked.append(dataclasses.replace(inst, masks=tuple(refs)))
    path = data_dir / "masked.jsonl"
    path.write_text("".join(json.dumps(grounding_record(i)) + "\n" for i in masked))

    out = tmp_path / "out"
    assert cli.cmd_ground(path, out, RunConfig(shape="mask")) == EXIT_OK
    assert read_report(out)["accuracy"] == 1.0


def test_cmd_ground_mask_shape_requires_masks(synth, tmp_path):
    dataset, _ = synth  # synthetic data has no mask refs
    out = tmp_path / "out"
    assert cli.cmd_ground(dataset, out, RunConfig(shape="mask")) == EXIT_OK
    records = load_predictions(out / "predictions.jsonl")
    assert all(r.error for r in records)  # per-instance errors, run continues


def test_jobs_pool_same_outputs_as_serial(synth, tmp_path):
    dataset, _ = synth
    cli.cmd_ground(dataset, tmp_path / "serial", RunConfig(jobs=1))
    cli.cmd_ground(dataset, tmp_path / "pooled", RunConfig(jobs=4))
    strip = lambda p: [
        {k: v for k, v in json.loads(line).items() if k != "elapsed_ms"}
        for line in Path(p).read_text().splitlines()
    ]
    assert strip(tmp_path / "serial/predictions.jsonl") == strip(
        tmp_path / "pooled/predictions.jsonl")


def test_console_script_ground_subprocess(tmp_path):
    data_dir = tmp_path / "d"
    generate_synthetic_grounding(data_dir, n_scenes=2, max_proposals=3, seed=3)
    cmd = [sys.executable, "-m", "cpt.cli", "ground",
           "--dataset", str(data_dir / "data.jsonl"), "--out", str(tmp_path / "o")]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "accuracy: 1.0000" in proc.stdout
