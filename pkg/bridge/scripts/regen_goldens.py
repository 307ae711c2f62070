#!/usr/bin/env python3
"""Rebuild tests/golden/ after an intentional stub or serialization change."""

import base64
import io
import json
from pathlib import Path

from PIL import Image

from cpt_bridge.stub import stub_per_slot_logprobs

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"


def main():
    buf = io.BytesIO()
    Image.new("RGB", (2, 2), (240, 0, 30)).save(buf, format="PNG")
    request = {
        "image_png_b64": base64.b64encode(buf.getvalue()).decode("ascii"),
        "prompt": "[CLS] the small dog is in [MASK] color [SEP]",
        "mask_count": 1,
        "candidates": [[
            {"label": "red", "tokens": ["red"]},
            {"label": "purple", "tokens": ["purple"]},
            {"label": "yellow", "tokens": ["yellow"]},
            {"label": "blue", "tokens": ["blue"]},
            {"label": "pink", "tokens": ["pink"]},
            {"label": "green", "tokens": ["green"]},
            {"label": "none", "tokens": ["none"]},
        ]],
        "meta": {"instance_id": "golden"},
    }
    response = {
        "per_slot_logprobs": stub_per_slot_logprobs(request["prompt"], request["candidates"]),
        "backend_id": "bridge-stub",
        "latency_ms": 0,
    }
    GOLDEN.mkdir(parents=True, exist_ok=True)
    (GOLDEN / "score_request.json").write_bytes(
        json.dumps(request, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    (GOLDEN / "score_response.json").write_bytes(
        json.dumps(response, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    print(f"wrote goldens under {GOLDEN}")


if __name__ == "__main__":
    main()
