"""Test adapters for model mode."""

from cpt_bridge.stub import softmax_logprobs


class ConstantAdapter:
    """Scores every candidate equally; proves the adapter seam works."""

    def __init__(self, config):
        self.config = config

    def per_slot_logprobs(self, prompt, image_png, candidates):
        return [softmax_logprobs({c["label"]: 0.0 for c in slot}) for slot in candidates]


class FailingAdapter:
    def __init__(self, config):
        pass

    def per_slot_logprobs(self, prompt, image_png, candidates):
        raise RuntimeError("checkpoint exploded")


class SlowAdapter:
    def __init__(self, config):
        pass

    def per_slot_logprobs(self, prompt, image_png, candidates):
        import time
        time.sleep(1.0)
        return []


def constant(config):
    return ConstantAdapter(config)


def failing(config):
    return FailingAdapter(config)


def slow(config):
    return SlowAdapter(config)
