"""HTTP surface of the scoring service.

POST /v1/score takes {"image_png_b64", "prompt", "mask_count", "candidates",
"meta"} and returns {"per_slot_logprobs", "backend_id", "latency_ms"}.
Schema violations return 400 with the offending field path; a candidate
layout that contradicts mask_count returns 422; adapter failures return 500.
Unknown request fields are ignored. Responses are serialized canonically
(sorted keys, compact separators) so stub-mode output is byte-stable.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import importlib
import io
import json

from fastapi import FastAPI, Request, Response
from PIL import Image

from .config import BridgeConfig
from .stub import stub_per_slot_logprobs


class SchemaError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class CandidateError(Exception):
    pass


def _validate_image(obj: dict, config: BridgeConfig) -> bytes:
    raw = obj.get("image_png_b64")
    if not isinstance(raw, str):
        raise SchemaError("image_png_b64", "must be a base64 string")
    try:
        data = base64.b64decode(raw, validate=True)
    except (binascii.Error, ValueError) as e:
        raise SchemaError("image_png_b64", f"invalid base64: {e}")
    if len(data) > config.max_image_bytes:
        raise SchemaError("image_png_b64", f"image exceeds {config.max_image_bytes} bytes")
    try:
        with Image.open(io.BytesIO(data)) as im:
            width, height = im.size
    except Exception as e:
        raise SchemaError("image_png_b64", f"not a decodable image: {e}")
    if width > config.max_image_side or height > config.max_image_side:
        raise SchemaError("image_png_b64", f"image side exceeds {config.max_image_side}")
    return data


def _validate_request(obj, config: BridgeConfig) -> tuple[bytes, str, int, list, dict]:
    if not isinstance(obj, dict):
        raise SchemaError("$", "body must be a JSON object")
    image = _validate_image(obj, config)
    prompt = obj.get("prompt")
    if not isinstance(prompt, str) or not prompt:
        raise SchemaError("prompt", "must be a non-empty string")
    mask_count = obj.get("mask_count")
    if not isinstance(mask_count, int) or isinstance(mask_count, bool) or mask_count < 1:
        raise SchemaError("mask_count", "must be an integer >= 1")
    candidates = obj.get("candidates")
    if not isinstance(candidates, list):
        raise SchemaError("candidates", "must be a list of per-slot lists")
    for k, slot in enumerate(candidates):
        if not isinstance(slot, list):
            raise SchemaError(f"candidates[{k}]", "must be a list")
        for i, cand in enumerate(slot):
            if not isinstance(cand, dict):
                raise SchemaError(f"candidates[{k}][{i}]", "must be an object")
            if not isinstance(cand.get("label"), str) or not cand["label"]:
                raise SchemaError(f"candidates[{k}][{i}].label", "must be a non-empty string")
            tokens = cand.get("tokens")
            if (not isinstance(tokens, list) or not tokens
                    or any(not isinstance(t, str) or not t for t in tokens)):
                raise SchemaError(f"candidates[{k}][{i}].tokens",
                                  "must be a non-empty list of non-empty strings")
    meta = obj.get("meta", {})
    if not isinstance(meta, dict) or any(
        not isinstance(k, str) or not isinstance(v, str) for k, v in meta.items()
    ):
        raise SchemaError("meta", "must map strings to strings")

    # semantic layout checks (422, not 400)
    if len(candidates) != mask_count:
        raise CandidateError(
            f"{len(candidates)} candidate slots for mask_count {mask_count}"
        )
    for k, slot in enumerate(candidates):
        if not slot:
            raise CandidateError(f"slot {k} has no candidates")
        labels = [c["label"] for c in slot]
        if len(set(labels)) != len(labels):
            raise CandidateError(f"slot {k} has duplicate candidate labels")
        for c in slot:
            if len(c["tokens"]) not in (1, mask_count):
                raise CandidateError(
                    f"candidate {c['label']!r} has {len(c['tokens'])} tokens; "
                    f"expected 1 or {mask_count}"
                )
    return image, prompt, mask_count, candidates, meta


def _load_adapter(config: BridgeConfig):
    module_name, _, attr = config.checkpoint.partition(":")
    if not module_name or not attr:
        raise ValueError(f"checkpoint must be module.path:factory, got {config.checkpoint!r}")
    factory = getattr(importlib.import_module(module_name), attr)
    return factory(config)


def _json_response(payload: dict, status: int = 200) -> Response:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return Response(content=body, status_code=status, media_type="application/json")


def create_app(config: BridgeConfig) -> FastAPI:
    app = FastAPI(title="cpt-bridge", docs_url=None, redoc_url=None)
    adapter = _load_adapter(config) if config.mode == "model" else None
    backend_id = "bridge-stub" if config.mode == "stub" else f"bridge-model:{config.checkpoint}"

    @app.get("/v1/health")
    async def health():
        return _json_response({"backend_id": backend_id, "mode": config.mode})

    @app.post("/v1/score")
    async def score(request: Request):
        raw = await request.body()
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            return _json_response({"error": f"$: body is not JSON: {e}"}, status=400)
        try:
            image, prompt, mask_count, candidates, meta = _validate_request(obj, config)
        except SchemaError as e:
            return _json_response({"error": str(e)}, status=400)
        except CandidateError as e:
            return _json_response({"error": str(e)}, status=422)

        if adapter is None:
            per_slot = stub_per_slot_logprobs(prompt, candidates)
        else:
            # adapters are synchronous; a hung checkpoint must not wedge the
            # worker past the configured request timeout
            loop = asyncio.get_running_loop()
            try:
                per_slot = await asyncio.wait_for(
                    loop.run_in_executor(
                        None, adapter.per_slot_logprobs, prompt, image, candidates),
                    timeout=config.request_timeout_s,
                )
            except asyncio.TimeoutError:
                return _json_response(
                    {"error": f"model timed out after {config.request_timeout_s}s"},
                    status=500)
            except Exception as e:
                return _json_response({"error": f"model failure: {e}"}, status=500)
        return _json_response({
            "per_slot_logprobs": per_slot,
            "backend_id": backend_id,
            "latency_ms": 0,
        })

    return app
