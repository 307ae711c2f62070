from dataclasses import dataclass


@dataclass
class BridgeConfig:
    """Service settings.

    mode "stub" needs no checkpoint; mode "model" loads an adapter from
    `checkpoint`, a "module.path:factory" reference whose factory receives
    this config and returns an object with
    per_slot_logprobs(prompt, image_png, candidates).
    """

    mode: str = "stub"
    host: str = "127.0.0.1"
    port: int = 8900
    checkpoint: str | None = None
    max_image_bytes: int = 8 * 1024 * 1024
    max_image_side: int = 4096
    request_timeout_s: float = 60.0

    def __post_init__(self):
        if self.mode not in ("stub", "model"):
            raise ValueError(f"mode must be stub or model, got {self.mode!r}")
        if self.mode == "model" and not self.checkpoint:
            raise ValueError("model mode needs --checkpoint module.path:factory")
