"""CLI: `cpt-bridge --mode stub --bind 127.0.0.1:8900`."""

import argparse

import uvicorn

from .app import create_app
from .config import BridgeConfig


def parse_args(argv=None) -> BridgeConfig:
    parser = argparse.ArgumentParser(prog="cpt-bridge", description=__doc__)
    parser.add_argument("--mode", choices=["stub", "model"], default="stub")
    parser.add_argument("--bind", default="127.0.0.1:8900", help="host:port")
    parser.add_argument("--checkpoint", help="module.path:factory adapter ref (model mode)")
    parser.add_argument("--max-image-bytes", type=int, default=8 * 1024 * 1024)
    parser.add_argument("--max-image-side", type=int, default=4096)
    parser.add_argument("--timeout", type=float, default=60.0)
    args = parser.parse_args(argv)
    host, _, port = args.bind.rpartition(":")
    return BridgeConfig(
        mode=args.mode,
        host=host or "127.0.0.1",
        port=int(port),
        checkpoint=args.checkpoint,
        max_image_bytes=args.max_image_bytes,
        max_image_side=args.max_image_side,
        request_timeout_s=args.timeout,
    )


def main(argv=None) -> int:
    config = parse_args(argv)
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
