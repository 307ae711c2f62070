import json

import numpy as np
import pytest

from cpt.dataio import (
    GroundingInstance,
    PredictionRecord,
    decode_mask_rle,
    encode_mask_rle,
    generate_synthetic_grounding,
    is_inline_rle,
    load_grounding,
    load_predictions,
    load_relations,
    save_grounding,
    save_predictions,
)
from cpt.errors import InputError, ParseError, ValidationError
from cpt.evalkit import iou
from cpt.raster import BoundingBox, SegmentMask


def write(tmp_path, name, lines):
    path = tmp_path / name
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


GOOD = json.dumps({
    "id": "a", "image": "images/a.png", "query": "the dog",
    "proposals": [[0, 0, 10, 10], [20, 0, 10, 10]],
    "gold_box": [0, 0, 10, 10],
})


def test_load_grounding_two_lines(tmp_path):
    second = GOOD.replace('"id": "a"', '"id": "b"')
    instances = load_grounding(write(tmp_path, "d.jsonl", [GOOD, second]))
    assert [i.id for i in instances] == ["a", "b"]
    assert instances[0].proposals[1] == BoundingBox(20, 0, 10, 10)


def test_load_grounding_empty_file(tmp_path):
    assert load_grounding(write(tmp_path, "d.jsonl", [])) == []


def test_load_grounding_missing_gold_box(tmp_path):
    record = json.loads(GOOD)
    del record["gold_box"]
    with pytest.raises(ValidationError) as err:
        load_grounding(write(tmp_path, "d.jsonl", [json.dumps(record)]))
    assert err.value.field == "gold_box"
    assert err.value.line == 1


def test_load_grounding_parse_error_carries_line(tmp_path):
    with pytest.raises(ParseError) as err:
        load_grounding(write(tmp_path, "d.jsonl", [GOOD, "{not json"]))
    assert err.value.line == 2


def test_load_grounding_rejects_duplicates_and_bad_boxes(tmp_path):
    with pytest.raises(ValidationError):
        load_grounding(write(tmp_path, "d.jsonl", [GOOD, GOOD]))
    bad = json.loads(GOOD)
    bad["proposals"] = [[0, 0, -5, 10]]
    with pytest.raises(ValidationError):
        load_grounding(write(tmp_path, "d.jsonl", [json.dumps(bad)]))
    empty = json.loads(GOOD)
    empty["proposals"] = []
    with pytest.raises(ValidationError):
        load_grounding(write(tmp_path, "d.jsonl", [json.dumps(empty)]))


def test_relations_load(tmp_path):
    rec = json.dumps({
        "id": "r1", "image": "img.png",
        "subject": {"text": "man", "box": [0, 0, 5, 5], "box_id": "b9"},
        "object": {"text": "horse", "box": [10, 0, 5, 5]},
        "gold_relations": ["riding"],
    })
    instances = load_relations(write(tmp_path, "r.jsonl", [rec]))
    inst = instances[0]
    assert inst.subject_id() == "b9"
    assert inst.object_id() == "r1/o"
    assert inst.gold_relations == ("riding",)


def test_relations_validation(tmp_path):
    missing = json.dumps({"id": "r1", "image": "i.png", "subject": {"text": "", "box": [0, 0, 1, 1]},
                          "object": {"text": "x", "box": [0, 0, 1, 1]}})
    with pytest.raises(ValidationError):
        load_relations(write(tmp_path, "r.jsonl", [missing]))
    assert load_relations(write(tmp_path, "r2.jsonl", [])) == []


def test_grounding_round_trip(tmp_path):
    instances = [GroundingInstance(
        id="x", image_ref="images/x.png", query="a thing",
        proposals=(BoundingBox(0.5, 1.5, 3.25, 4.0),),
        gold_box=BoundingBox(0.5, 1.5, 3.25, 4.0),
        masks=("4,2:3,5",),
        split="val",
        meta={"alpha": "0.5"},
    )]
    path = tmp_path / "round.jsonl"
    save_grounding(instances, path)
    assert load_grounding(path) == instances


def test_predictions_round_trip(tmp_path):
    records = [
        PredictionRecord("a", BoundingBox(1, 2, 3, 4), 0, {0: 0.75, 1: 0.25}, elapsed_ms=3),
        PredictionRecord("b", None, None, {}, error="image load failed"),
    ]
    path = tmp_path / "preds.jsonl"
    save_predictions(records, path)
    loaded = load_predictions(path)
    assert loaded[0].predicted_box == BoundingBox(1, 2, 3, 4)
    assert loaded[0].per_region_prob == {0: 0.75, 1: 0.25}
    assert loaded[1].error == "image load failed"
    assert loaded[1].predicted_box is None


def test_rle_round_trip():
    bits = np.zeros((3, 4), dtype=np.bool_)
    bits[1, 1:3] = True
    bits[2, :] = True
    mask = SegmentMask(bits)
    text = encode_mask_rle(mask)
    assert is_inline_rle(text)
    back = decode_mask_rle(text)
    assert np.array_equal(back.bits, bits)
    assert not is_inline_rle("images/mask.png")
    with pytest.raises(InputError):
        decode_mask_rle("4,3:5,5")  # wrong total


def test_synthetic_one_scene(tmp_path):
    instances = generate_synthetic_grounding(tmp_path / "d", n_scenes=1, max_proposals=1, seed=3)
    assert len(instances) == 1
    inst = instances[0]
    assert len(inst.proposals) == 1
    assert inst.query == "target 0"
    assert inst.meta["alpha"] == "0.5"
    assert (tmp_path / "d" / "data.jsonl").exists()
    assert (tmp_path / "d" / inst.image_ref).exists()


def test_synthetic_deterministic(tmp_path):
    a = generate_synthetic_grounding(tmp_path / "a", n_scenes=5, max_proposals=6, seed=42)
    b = generate_synthetic_grounding(tmp_path / "b", n_scenes=5, max_proposals=6, seed=42)
    assert [i.proposals for i in a] == [i.proposals for i in b]
    assert (tmp_path / "a" / "data.jsonl").read_bytes() == (tmp_path / "b" / "data.jsonl").read_bytes()
    img = a[0].image_ref
    assert (tmp_path / "a" / img).read_bytes() == (tmp_path / "b" / img).read_bytes()
    c = generate_synthetic_grounding(tmp_path / "c", n_scenes=5, max_proposals=6, seed=43)
    assert [i.proposals for i in a] != [i.proposals for i in c]


def test_synthetic_respects_overlap_bound(tmp_path):
    instances = generate_synthetic_grounding(tmp_path / "d", n_scenes=200, max_proposals=6, seed=7)
    worst = 0.0
    for inst in instances:
        for i in range(len(inst.proposals)):
            for j in range(i + 1, len(inst.proposals)):
                worst = max(worst, iou(inst.proposals[i], inst.proposals[j]))
        # gold box is one of the proposals and matches the meta hint
        assert inst.gold_box in inst.proposals
        x, y, w, h = (float(v) for v in inst.meta["target_box"].split(","))
        assert inst.gold_box == BoundingBox(x, y, w, h)
    assert worst < 0.5


def test_synthetic_round_trips_through_loader(tmp_path):
    instances = generate_synthetic_grounding(tmp_path / "d", n_scenes=3, max_proposals=4, seed=1)
    assert load_grounding(tmp_path / "d" / "data.jsonl") == instances
