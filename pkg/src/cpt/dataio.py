"""Dataset schemas, persistence and the synthetic scene generator.

Datasets are JSONL, one record per line. Grounding records:

    {"id": str, "image": str, "query": str,
     "proposals": [[x, y, w, h], ...],
     "masks": [ref-or-null, ...]?        # optional, parallel to proposals
     "gold_box": [x, y, w, h],
     "split": str?, "meta": {str: str}?}

Relation records:

    {"id": str, "image": str,
     "subject": {"text": str, "box": [x, y, w, h], "box_id": str?},
     "object":  {"text": str, "box": [x, y, w, h], "box_id": str?},
     "gold_relations": [str, ...]}

Mask refs are either a path (relative to the dataset file) or an inline
run-length string "w,h:off,on,off,..." over the row-major pixel order,
starting with an off-run. Image refs are paths relative to the dataset file.

Synthetic scenes are uniform gray images whose proposals sit in disjoint
jittered grid cells, so pairwise IoU is 0 (trivially under the 0.5 batching
bound) and the chromatic oracle's pixel measurements stay uncorrupted. The
instance meta records the gold box and overlay alpha for the oracle.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .colors import Rgb
from .errors import InputError, ParseError, ValidationError
from .raster import BoundingBox, RasterImage, SegmentMask, encode_png
from .rng import SplitMix64

BACKGROUND_GRAY = Rgb(128, 128, 128)
_RLE_RE = re.compile(r"^\d+,\d+:\d+(,\d+)*$")


@dataclass(frozen=True)
class GroundingInstance:
    id: str
    image_ref: str
    query: str
    proposals: tuple[BoundingBox, ...]
    gold_box: BoundingBox
    masks: tuple[str | None, ...] | None = None
    split: str = ""
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.proposals:
            raise InputError(f"instance {self.id!r} has no proposals")
        if self.masks is not None and len(self.masks) != len(self.proposals):
            raise InputError(f"instance {self.id!r}: masks not parallel to proposals")


@dataclass(frozen=True)
class EntityRef:
    text: str
    box: BoundingBox
    box_id: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise InputError("entity text is empty")


@dataclass(frozen=True)
class RelationInstance:
    id: str
    image_ref: str
    subject: EntityRef
    object: EntityRef
    gold_relations: tuple[str, ...] = ()

    def subject_id(self) -> str:
        return self.subject.box_id or f"{self.id}/s"

    def object_id(self) -> str:
        return self.object.box_id or f"{self.id}/o"


@dataclass
class PredictionRecord:
    instance_id: str
    predicted_box: BoundingBox | None
    predicted_index: int | None
    per_region_prob: dict[int, float]
    elapsed_ms: int = 0
    fallback: bool = False
    error: str | None = None


# --- JSONL plumbing ---------------------------------------------------------

def _read_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(lineno, str(e)) from e


def _require(obj: dict, key: str, lineno: int):
    if key not in obj:
        raise ValidationError(lineno, key, "missing")
    return obj[key]


def _parse_box(value, lineno: int, fieldname: str) -> BoundingBox:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValidationError(lineno, fieldname, f"expected [x, y, w, h], got {value!r}")
    try:
        return BoundingBox(*(float(v) for v in value))
    except (TypeError, ValueError, InputError) as e:
        raise ValidationError(lineno, fieldname, str(e)) from e


def load_grounding(path: str | Path) -> list[GroundingInstance]:
    instances: list[GroundingInstance] = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        iid = str(_require(obj, "id", lineno))
        if iid in seen:
            raise ValidationError(lineno, "id", f"duplicate id {iid!r}")
        seen.add(iid)
        proposals_raw = _require(obj, "proposals", lineno)
        if not isinstance(proposals_raw, list) or not proposals_raw:
            raise ValidationError(lineno, "proposals", "must be a non-empty list")
        proposals = tuple(
            _parse_box(p, lineno, f"proposals[{i}]") for i, p in enumerate(proposals_raw)
        )
        masks = obj.get("masks")
        if masks is not None:
            if not isinstance(masks, list) or len(masks) != len(proposals):
                raise ValidationError(lineno, "masks", "must parallel proposals")
            masks = tuple(None if m is None else str(m) for m in masks)
        query = str(_require(obj, "query", lineno))
        if not query.strip():
            raise ValidationError(lineno, "query", "empty")
        try:
            instances.append(GroundingInstance(
                id=iid,
                image_ref=str(_require(obj, "image", lineno)),
                query=query,
                proposals=proposals,
                gold_box=_parse_box(_require(obj, "gold_box", lineno), lineno, "gold_box"),
                masks=masks,
                split=str(obj.get("split", "")),
                meta={str(k): str(v) for k, v in obj.get("meta", {}).items()},
            ))
        except ValidationError:
            raise
        except InputError as e:
            raise ValidationError(lineno, "record", str(e)) from e
    return instances


def _parse_entity(obj, lineno: int, fieldname: str) -> EntityRef:
    if not isinstance(obj, dict):
        raise ValidationError(lineno, fieldname, "expected an object")
    text = obj.get("text", "")
    if not isinstance(text, str) or not text.strip():
        raise ValidationError(lineno, f"{fieldname}.text", "empty")
    box = _parse_box(obj.get("box"), lineno, f"{fieldname}.box")
    box_id = obj.get("box_id")
    return EntityRef(text=text, box=box, box_id=None if box_id is None else str(box_id))


def load_relations(path: str | Path) -> list[RelationInstance]:
    instances: list[RelationInstance] = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        iid = str(_require(obj, "id", lineno))
        if iid in seen:
            raise ValidationError(lineno, "id", f"duplicate id {iid!r}")
        seen.add(iid)
        gold = obj.get("gold_relations", [])
        if not isinstance(gold, list):
            raise ValidationError(lineno, "gold_relations", "must be a list")
        instances.append(RelationInstance(
            id=iid,
            image_ref=str(_require(obj, "image", lineno)),
            subject=_parse_entity(_require(obj, "subject", lineno), lineno, "subject"),
            object=_parse_entity(_require(obj, "object", lineno), lineno, "object"),
            gold_relations=tuple(str(g) for g in gold),
        ))
    return instances


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def grounding_record(inst: GroundingInstance) -> dict:
    obj = {
        "id": inst.id,
        "image": inst.image_ref,
        "query": inst.query,
        "proposals": [b.as_list() for b in inst.proposals],
        "gold_box": inst.gold_box.as_list(),
    }
    if inst.masks is not None:
        obj["masks"] = list(inst.masks)
    if inst.split:
        obj["split"] = inst.split
    if inst.meta:
        obj["meta"] = inst.meta
    return obj


def save_grounding(instances: Iterable[GroundingInstance], path: str | Path) -> None:
    lines = [json.dumps(grounding_record(i), sort_keys=True) for i in instances]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def prediction_record(rec: PredictionRecord) -> dict:
    return {
        "id": rec.instance_id,
        "predicted_box": None if rec.predicted_box is None else rec.predicted_box.as_list(),
        "predicted_index": rec.predicted_index,
        "per_region_prob": {str(k): v for k, v in sorted(rec.per_region_prob.items())},
        "elapsed_ms": rec.elapsed_ms,
        "fallback": rec.fallback,
        "error": rec.error,
    }


def save_predictions(records: Iterable[PredictionRecord], path: str | Path) -> None:
    lines = [json.dumps(prediction_record(r), sort_keys=True) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    records = []
    for lineno, obj in _read_jsonl(path):
        box = obj.get("predicted_box")
        records.append(PredictionRecord(
            instance_id=str(_require(obj, "id", lineno)),
            predicted_box=None if box is None else _parse_box(box, lineno, "predicted_box"),
            predicted_index=obj.get("predicted_index"),
            per_region_prob={int(k): float(v) for k, v in obj.get("per_region_prob", {}).items()},
            elapsed_ms=int(obj.get("elapsed_ms", 0)),
            fallback=bool(obj.get("fallback", False)),
            error=obj.get("error"),
        ))
    return records


# --- segmentation mask refs ---------------------------------------------------

def encode_mask_rle(mask: SegmentMask) -> str:
    flat = mask.bits.reshape(-1)
    runs = []
    current = False
    count = 0
    for bit in flat:
        if bool(bit) == current:
            count += 1
        else:
            runs.append(count)
            current = not current
            count = 1
    runs.append(count)
    return f"{mask.width},{mask.height}:" + ",".join(str(r) for r in runs)


def decode_mask_rle(text: str) -> SegmentMask:
    if not _RLE_RE.match(text):
        raise InputError(f"not a run-length mask: {text!r}")
    header, runs_part = text.split(":")
    w, h = (int(p) for p in header.split(","))
    runs = [int(p) for p in runs_part.split(",")]
    if sum(runs) != w * h:
        raise InputError(f"run lengths sum to {sum(runs)}, expected {w * h}")
    flat = np.zeros(w * h, dtype=np.bool_)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return SegmentMask(flat.reshape(h, w))


def is_inline_rle(ref: str) -> bool:
    return bool(_RLE_RE.match(ref))


# --- synthetic scenes ----------------------------------------------------------

def generate_synthetic_grounding(
    out_dir: str | Path,
    n_scenes: int,
    max_proposals: int,
    seed: int,
    alpha: float = 0.5,
    image_size: tuple[int, int] = (192, 192),
) -> list[GroundingInstance]:
    """Write `n_scenes` gray scenes plus data.jsonl under out_dir.

    Each scene holds 1..max_proposals integer-coordinate boxes, one per
    jittered grid cell with a 4 px inset, so distinct boxes never touch.
    The query names the hidden target index; meta carries the gold box and
    alpha for the chromatic oracle. Deterministic under (seed, parameters).
    """
    if n_scenes < 1 or max_proposals < 1:
        raise InputError("need n_scenes >= 1 and max_proposals >= 1")
    width, height = image_size
    cols = int(np.ceil(np.sqrt(max_proposals)))
    rows = int(np.ceil(max_proposals / cols))
    cell_w, cell_h = width // cols, height // rows
    if cell_w < 28 or cell_h < 28:
        raise InputError(
            f"{width}x{height} image cannot host {max_proposals} disjoint cells"
        )

    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = SplitMix64(seed)
    background_png = encode_png(RasterImage.filled(BACKGROUND_GRAY, width, height))

    instances = []
    for scene in range(n_scenes):
        k = 1 + rng.randrange(max_proposals)
        cells = rng.draw(list(range(cols * rows)), k)
        boxes = []
        for cell in sorted(cells):
            cx0 = (cell % cols) * cell_w
            cy0 = (cell // cols) * cell_h
            w = 16 + rng.randrange(cell_w - 8 - 16 + 1)
            h = 16 + rng.randrange(cell_h - 8 - 16 + 1)
            x = cx0 + 4 + rng.randrange(cell_w - 8 - w + 1)
            y = cy0 + 4 + rng.randrange(cell_h - 8 - h + 1)
            boxes.append((x, y, w, h))
        target = rng.randrange(k)
        tx, ty, tw, th = boxes[target]

        image_name = f"images/scene_{scene:04d}.png"
        atomic_write_bytes(out_dir / image_name, background_png)
        instances.append(GroundingInstance(
            id=f"scene_{scene:04d}",
            image_ref=image_name,
            query=f"target {target}",
            proposals=tuple(BoundingBox(*(float(v) for v in b)) for b in boxes),
            gold_box=BoundingBox(float(tx), float(ty), float(tw), float(th)),
            split="synthetic",
            meta={"target_box": f"{tx},{ty},{tw},{th}", "alpha": repr(alpha)},
        ))
    save_grounding(instances, out_dir / "data.jsonl")
    return instances
