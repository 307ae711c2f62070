"""Deterministic stub scoring.

The pinned algorithm (keep in sync with in-process stub clients):

1. logit(prompt, label) = fnv1a64(utf8("<prompt>" + "\\x1f" + "<label>")) / 2**64
   where fnv1a64 is 64-bit FNV-1a (offset 0xCBF29CE484222325, prime
   0x100000001B3).
2. Per mask slot, log-probabilities are a softmax over the slot's candidate
   labels: lp = logit - (hi + log(sum(exp(logit - hi)))) with hi the slot
   maximum and the sum taken in sorted-label order, so the result is
   bit-identical however the candidate mapping was assembled.

Responses are a pure function of (prompt, candidate labels); pixels are
never read. latency_ms is fixed at 0 so responses are byte-stable.
"""

import math

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
    return fnv1a64(f"{prompt}\x1f{label}".encode("utf-8")) / 2**64


def softmax_logprobs(logits: dict) -> dict:
    hi = max(logits.values())
    log_z = hi + math.log(sum(math.exp(logits[k] - hi) for k in sorted(logits)))
    return {label: v - log_z for label, v in logits.items()}


def stub_per_slot_logprobs(prompt: str, candidates: list) -> list:
    """candidates: one list of {"label": ..., "tokens": [...]} per slot."""
    return [
        softmax_logprobs({c["label"]: stub_logit(prompt, c["label"]) for c in slot})
        for slot in candidates
    ]
