"""The masked-token scoring contract and its built-in implementations.

A backend receives an image plus a rendered prompt with mask slots and
returns, per slot, a normalized log-probability for every candidate label.
Three implementations ship here:

* ChromaticOracle - deterministic mock that reads the overlay color off the
  pixels of a known target box; lets the whole pipeline be verified
  end-to-end without a neural model.
* StubHashBackend - deterministic pseudo-scores from a pinned hash; the
  in-process twin of the reference scoring service's stub mode.
* RemoteBackend - JSON-over-HTTP client for a real scoring service.

Stub hash algorithm (pinned; keep in sync with the bridge service):
FNV-1a 64-bit over the UTF-8 bytes of "<prompt>\\x1f<candidate label>",
divided by 2^64 to get a logit in [0, 1), then softmax per slot.
"""

from __future__ import annotations

import base64
import json
import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import requests

from .colors import NONE_LABEL, ColorSet, Rgb, builtin_color_table
from .errors import (
    MissingMeta,
    ModelFailureError,
    ProtocolError,
    TransportError,
)
from .prompts import CandidateTokenSeq
from .raster import BoundingBox, RasterImage, decode_png, encode_png
from .scoring import MaskDistribution, normalize_slots

_RESPONSE_TOL = 1e-6


@dataclass(frozen=True)
class ScoreRequest:
    """One forward pass: image, rendered prompt, per-slot candidates.

    Candidates are slot-style: one single-token entry per candidate per slot
    (sequence-style entries spanning all slots are also accepted for foreign
    backends). meta carries opaque strings such as the instance id or the
    oracle's hidden-target hints.
    """

    image: RasterImage
    prompt: str
    mask_count: int
    candidates: tuple[tuple[CandidateTokenSeq, ...], ...]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.mask_count < 1:
            raise ProtocolError(f"mask_count must be >= 1, got {self.mask_count}")
        if len(self.candidates) != self.mask_count:
            raise ProtocolError(
                f"{len(self.candidates)} candidate slots for mask_count {self.mask_count}"
            )
        for k, slot in enumerate(self.candidates):
            if not slot:
                raise ProtocolError(f"slot {k} has no candidates")
            labels = [c.label for c in slot]
            if len(set(labels)) != len(labels):
                raise ProtocolError(f"slot {k} has duplicate candidate labels")
            for c in slot:
                if len(c.tokens) not in (1, self.mask_count):
                    raise ProtocolError(
                        f"candidate {c.label!r} has {len(c.tokens)} tokens; "
                        f"expected 1 (slot-style) or {self.mask_count} (sequence-style)"
                    )
        for k, v in self.meta.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise ProtocolError("meta must map strings to strings")


@dataclass(frozen=True)
class ScoreResponse:
    per_slot_logprobs: tuple[dict[str, float], ...]
    backend_id: str
    latency_ms: int = 0

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ProtocolError("latency cannot be negative")
        for k, slot in enumerate(self.per_slot_logprobs):
            if not slot:
                raise ProtocolError(f"response slot {k} is empty")
            if any(not math.isfinite(lp) or lp > 1e-6 for lp in slot.values()):
                raise ProtocolError(f"response slot {k} has non-finite or positive log-probs")
            total = sum(math.exp(lp) for lp in slot.values())
            if abs(total - 1.0) > _RESPONSE_TOL:
                raise ProtocolError(f"response slot {k} probabilities sum to {total}")


def response_to_distribution(response: ScoreResponse) -> MaskDistribution:
    """Re-normalize a response into a MaskDistribution (tightens the wire's
    1e-6 tolerance to the decoder's 1e-9)."""
    return normalize_slots(response.per_slot_logprobs)


class ScoringBackend:
    """Contract: deterministic backends return identical responses for
    identical requests; implementations must be safe for concurrent calls."""

    backend_id = "abstract"

    def score(self, request: ScoreRequest) -> ScoreResponse:
        raise NotImplementedError


# --- chromatic oracle -------------------------------------------------------

class ChromaticOracle(ScoringBackend):
    """Scores color candidates by comparing the mean pixel over the hidden
    target box against each candidate's expected blend on the gray background.

    Synthetic scenes have a uniform (128,128,128) background; the generator
    stores the gold box and the overlay alpha in instance meta. A candidate's
    expected appearance is round(alpha*128 + (1-alpha)*rgb) per channel, its
    logit the negative L1 distance to the measured mean divided by 3. "none"
    gets a fixed logit of -20; the defaults separate both built-in presets at
    alpha 0.5.
    """

    backend_id = "chromatic-oracle"
    BACKGROUND = 128.0

    def __init__(
        self,
        color_table: Mapping[str, Rgb] | None = None,
        none_logit: float = -20.0,
        distance_scale: float = 3.0,
    ):
        self.table: dict[str, Rgb] = dict(builtin_color_table() if color_table is None else color_table)
        self.none_logit = none_logit
        self.distance_scale = distance_scale
        self.calls = 0

    def register_color_set(self, colors: ColorSet) -> None:
        """Make the color set's texts resolve to its actual appearances."""
        for c in colors:
            self.table[c.text] = c.visual

    def score(self, request: ScoreRequest) -> ScoreResponse:
        self.calls += 1
        if "target_box" not in request.meta:
            raise MissingMeta("oracle needs meta['target_box'] = 'x,y,w,h'")
        if "alpha" not in request.meta:
            raise MissingMeta("oracle needs meta['alpha']")
        try:
            x, y, w, h = (float(p) for p in request.meta["target_box"].split(","))
            alpha = float(request.meta["alpha"])
        except ValueError as e:
            raise MissingMeta(f"unparseable oracle meta: {e}") from e
        measured = request.image.mean_over_box(BoundingBox(x, y, w, h))

        per_slot = []
        for slot in request.candidates:
            logits: dict[str, float] = {}
            for cand in slot:
                if cand.label == NONE_LABEL:
                    logits[cand.label] = self.none_logit
                    continue
                rgb = self.table.get(cand.label)
                if rgb is None:
                    raise ProtocolError(f"oracle has no reference color for {cand.label!r}")
                expected = [
                    math.floor(alpha * self.BACKGROUND + (1 - alpha) * ch + 0.5)
                    for ch in rgb.as_tuple()
                ]
                l1 = float(sum(abs(m - e) for m, e in zip(measured, expected)))
                logits[cand.label] = -l1 / self.distance_scale
            per_slot.append(_softmax_logprobs(logits))
        return ScoreResponse(
            per_slot_logprobs=tuple(per_slot),
            backend_id=self.backend_id,
            latency_ms=0,
        )


# --- pinned-hash stub --------------------------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


def stub_logit(prompt: str, label: str) -> float:
    """Deterministic pseudo-logit in [0, 1): FNV-1a 64 of
    "<prompt>\\x1f<label>" over 2^64."""
    return fnv1a64(f"{prompt}\x1f{label}".encode("utf-8")) / 2**64


def _softmax_logprobs(logits: Mapping[str, float]) -> dict[str, float]:
    hi = max(logits.values())
    # sorted-label summation: see scoring._normalize_one
    log_z = hi + math.log(sum(math.exp(logits[k] - hi) for k in sorted(logits)))
    return {label: v - log_z for label, v in logits.items()}


class StubHashBackend(ScoringBackend):
    """Pure function of (prompt, candidate labels); no pixels are read."""

    backend_id = "stub-hash"

    def __init__(self):
        self.calls = 0

    def score(self, request: ScoreRequest) -> ScoreResponse:
        self.calls += 1
        per_slot = tuple(
            _softmax_logprobs({c.label: stub_logit(request.prompt, c.label) for c in slot})
            for slot in request.candidates
        )
        return ScoreResponse(per_slot_logprobs=per_slot, backend_id=self.backend_id, latency_ms=0)


# --- wire format --------------------------------------------------------------

def request_wire_body(request: ScoreRequest) -> bytes:
    """Canonical JSON body for POST /v1/score: sorted keys, compact
    separators, UTF-8; the image goes as base64 PNG."""
    obj = {
        "image_png_b64": base64.b64encode(encode_png(request.image)).decode("ascii"),
        "prompt": request.prompt,
        "mask_count": request.mask_count,
        "candidates": [
            [{"label": c.label, "tokens": list(c.tokens)} for c in slot]
            for slot in request.candidates
        ],
        "meta": request.meta,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def request_from_wire(obj: Mapping) -> ScoreRequest:
    """Inverse of request_wire_body for servers; unknown fields ignored."""
    try:
        image = decode_png(base64.b64decode(obj["image_png_b64"]))
        candidates = tuple(
            tuple(CandidateTokenSeq(label=c["label"], tokens=tuple(c["tokens"])) for c in slot)
            for slot in obj["candidates"]
        )
        return ScoreRequest(
            image=image,
            prompt=obj["prompt"],
            mask_count=int(obj["mask_count"]),
            candidates=candidates,
            meta={str(k): str(v) for k, v in obj.get("meta", {}).items()},
        )
    except (KeyError, TypeError, ValueError, OSError) as e:
        raise ProtocolError(f"malformed score request: {e}") from e


def parse_score_response(obj: Mapping) -> ScoreResponse:
    try:
        slots = tuple(
            {str(label): float(lp) for label, lp in slot.items()}
            for slot in obj["per_slot_logprobs"]
        )
        return ScoreResponse(
            per_slot_logprobs=slots,
            backend_id=str(obj["backend_id"]),
            latency_ms=int(obj.get("latency_ms", 0)),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ProtocolError(f"malformed score response: {e}") from e


class RemoteBackend(ScoringBackend):
    """Client for the wire protocol; retries transport failures (connection
    errors and 5xx) with exponential backoff, never retries protocol errors."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self.backend_id = f"remote:{self.base_url}"

    def health(self) -> dict:
        try:
            resp = self.session.get(f"{self.base_url}/v1/health", timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(f"health check failed: {e}") from e
        if resp.status_code != 200:
            raise TransportError(f"health returned {resp.status_code}")
        return resp.json()

    def score(self, request: ScoreRequest) -> ScoreResponse:
        body = request_wire_body(request)
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    f"{self.base_url}/v1/score",
                    data=body,
                    headers={"Content-Type": "application/json"},
                    timeout=self.timeout,
                )
            except requests.RequestException as e:
                last_error = TransportError(f"request failed: {e}")
                continue
            if 400 <= resp.status_code < 500:
                detail = _error_detail(resp)
                raise ProtocolError(f"server rejected request ({resp.status_code}): {detail}")
            if resp.status_code >= 500:
                last_error = _server_failure(resp)
                continue
            try:
                payload = resp.json()
            except ValueError as e:
                raise ProtocolError(f"response is not JSON: {e}") from e
            return parse_score_response(payload)
        assert last_error is not None
        raise last_error


def _error_detail(resp) -> str:
    try:
        return str(resp.json().get("error", resp.text))
    except ValueError:
        return resp.text


def _server_failure(resp) -> TransportError | ModelFailureError:
    try:
        body = resp.json()
    except ValueError:
        body = None
    if isinstance(body, dict) and "error" in body:
        err = ModelFailureError(f"model failure ({resp.status_code}): {body['error']}")
        err.retryable = True  # retried like any 5xx; surfaced if retries run out
        return err
    return TransportError(f"server error {resp.status_code}")
