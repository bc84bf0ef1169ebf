"""Sensor-fleet simulator: replay a reading script against a gateway.

A script is a JSON array of steps: {"delay_ms": 0, "channel": 1,
"value": 51.0}. Every simulated node opens its own connection and replays
the script (optionally several times). With --generate, a synthetic
square wave or ramp is produced instead of reading a script file, which
is handy for driving threshold channels.

Exit codes: 0 when every frame was sent, 1 on connection failures,
2 on bad arguments or a bad script.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from dataclasses import dataclass

from ..wire import encode_reading


@dataclass(frozen=True)
class Step:
    delay_ms: float
    channel: int
    value: float


def load_script(path: str) -> list[Step]:
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    return parse_script(raw)


def parse_script(raw) -> list[Step]:
    if not isinstance(raw, list):
        raise ValueError("script must be a JSON array of steps")
    steps = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ValueError(f"step {i} must be an object")
        try:
            step = Step(
                delay_ms=float(entry.get("delay_ms", 0)),
                channel=int(entry["channel"]),
                value=float(entry["value"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"step {i} is malformed: {exc}") from None
        if step.delay_ms < 0:
            raise ValueError(f"step {i}: delay_ms must be non-negative")
        steps.append(step)
    return steps


def generate_script(shape: str, *, channel: int, low: float, high: float,
                    period_ms: float, cycles: int) -> list[Step]:
    """Synthetic threshold-test stimuli.

    square: alternate high/low once per half period, crossing a threshold
    between them each cycle. ramp: climb low->high in ten steps per cycle,
    then restart from low.
    """
    steps: list[Step] = []
    if shape == "square":
        for _ in range(cycles):
            steps.append(Step(period_ms / 2, channel, high))
            steps.append(Step(period_ms / 2, channel, low))
        return steps
    if shape == "ramp":
        points = 10
        for _ in range(cycles):
            for i in range(points):
                value = low + (high - low) * i / (points - 1)
                steps.append(Step(period_ms / points, channel, value))
        return steps
    raise ValueError(f"unknown waveform {shape!r}")


async def run_node(node: int, host: str, port: int, steps: list[Step], repeat: int) -> int:
    """Replay the script over one connection; returns frames sent."""
    reader, writer = await asyncio.open_connection(host, port)
    sent = 0
    try:
        for _ in range(repeat):
            for step in steps:
                if step.delay_ms:
                    await asyncio.sleep(step.delay_ms / 1000.0)
                writer.write(encode_reading(step.channel, step.value) + b"\n")
                await writer.drain()
                sent += 1
        return sent
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except ConnectionError:
            pass


async def run_fleet(host: str, port: int, steps: list[Step], nodes: int, repeat: int) -> list[int]:
    tasks = [run_node(n, host, port, steps, repeat) for n in range(nodes)]
    return await asyncio.gather(*tasks)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sensor-sim", description="Replay sensor reading scripts against a gateway.")
    parser.add_argument("gateway", help="gateway sensor endpoint, host:port")
    parser.add_argument("script", nargs="?", help="path to a script JSON file")
    parser.add_argument("--nodes", type=int, default=1, help="simulated node count (default 1)")
    parser.add_argument("--repeat", type=int, default=1, help="script repetitions per node")
    parser.add_argument("--generate", choices=("square", "ramp"),
                        help="generate a waveform instead of reading a script")
    parser.add_argument("--channel", type=int, default=0, help="channel id for --generate")
    parser.add_argument("--low", type=float, default=0.0, help="low value for --generate")
    parser.add_argument("--high", type=float, default=1.0, help="high value for --generate")
    parser.add_argument("--period-ms", type=float, default=100.0,
                        help="waveform period for --generate (default 100)")
    parser.add_argument("--cycles", type=int, default=1, help="waveform cycles for --generate")
    args = parser.parse_args(argv)

    try:
        host, port_text = args.gateway.rsplit(":", 1)
        port = int(port_text)
    except ValueError:
        print(f"sensor-sim: gateway must be host:port, got {args.gateway!r}", file=sys.stderr)
        return 2

    try:
        if args.generate:
            steps = generate_script(args.generate, channel=args.channel, low=args.low,
                                    high=args.high, period_ms=args.period_ms, cycles=args.cycles)
        elif args.script:
            steps = load_script(args.script)
        else:
            print("sensor-sim: a script path or --generate is required", file=sys.stderr)
            return 2
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"sensor-sim: bad script: {exc}", file=sys.stderr)
        return 2

    try:
        counts = asyncio.run(run_fleet(host, port, steps, args.nodes, args.repeat))
    except (ConnectionError, OSError) as exc:
        print(f"sensor-sim: cannot reach gateway {args.gateway}: {exc}", file=sys.stderr)
        return 1

    expected = len(steps) * args.repeat
    for node, sent in enumerate(counts):
        print(f"node {node}: sent {sent}")
    return 0 if all(sent == expected for sent in counts) else 1


if __name__ == "__main__":
    sys.exit(main())
