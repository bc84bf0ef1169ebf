#!/usr/bin/env python3
"""Latency experiment: event-to-first-notification over loopback mocks.

Spawns a real gatewayd subprocess, injects 100 threshold crossings, and
reports mean/p50/p99. The budget in the acceptance suite is mean < 250 ms
and p99 < 1000 ms; typical desktop numbers are single-digit milliseconds.
Wall-clock figures from hardware deployments include physical push/GSM
delivery and are not comparable.
"""

import argparse
import json

from evhub.bench import run_latency


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--runs", type=int, default=100)
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args()

    stats = run_latency(args.runs)
    if args.json:
        print(json.dumps(stats.as_dict()))
    else:
        print(f"runs={stats.runs} failures={stats.failures}")
        if stats.samples:
            print(f"mean_ms={stats.mean_ms:.3f} p50_ms={stats.p50_ms:.3f} "
                  f"p99_ms={stats.p99_ms:.3f}")
    return 0 if stats.failures == 0 else 1


if __name__ == "__main__":
    raise SystemExit(main())
