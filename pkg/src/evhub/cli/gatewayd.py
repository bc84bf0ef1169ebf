"""Gateway daemon entrypoint.

    gatewayd CONFIG.json            run until SIGINT/SIGTERM
    gatewayd --hash-password        digest a password read from stdin

On startup the daemon prints one JSON "ready" line to stdout with the
bound addresses, then logs to stderr. Config errors exit nonzero with a
diagnostic naming the offending line or field.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys

from ..config import ConfigError, load_config
from ..daemon import Gateway
from ..registry import CorruptSnapshot, hash_password


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gatewayd", description="Run the event gateway described by a config file.")
    parser.add_argument("config", nargs="?", help="path to the gateway config JSON file")
    parser.add_argument("--hash-password", action="store_true",
                        help="read a password from stdin, print its digest, and exit")
    parser.add_argument("--log-level", default="INFO",
                        help="stderr log level (default INFO)")
    args = parser.parse_args(argv)

    logging.basicConfig(
        stream=sys.stderr, level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.hash_password:
        password = sys.stdin.readline().rstrip("\n")
        if not password:
            print("gatewayd: empty password on stdin", file=sys.stderr)
            return 1
        print(hash_password(password))
        return 0

    if not args.config:
        parser.error("config path is required (or use --hash-password)")

    try:
        config = load_config(args.config)
        gateway = Gateway(config)
    except (ConfigError, CorruptSnapshot, ValueError) as exc:
        print(f"gatewayd: {exc}", file=sys.stderr)
        return 1

    async def serve() -> None:
        await gateway.start()
        print(json.dumps({"event": "ready", **gateway.describe()}), flush=True)
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        import signal

        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        try:
            await stop.wait()
        finally:
            await gateway.stop()

    try:
        asyncio.run(serve())
    except OSError as exc:
        print(f"gatewayd: cannot start listeners: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
