"""Bench harness CLI: latency and memory experiments.

    evh-bench latency --runs 100 [--json]
    evh-bench memory --counts 0,30,100,1000,2000,5000 [--json]
"""

from __future__ import annotations

import argparse
import json
import sys

from ..bench import memory_csv, run_latency, run_memory

LATENCY_HEADER = (
    "# gateway-internal latency: threshold-crossing reading injected at the\n"
    "# sensor socket -> first notification observed at in-process mock\n"
    "# transports over loopback. Physical push/GSM delivery is excluded;\n"
    "# wall-clock numbers from hardware deployments are not comparable.\n"
)

MEMORY_HEADER = (
    "# resident set size of the gateway process per subscriber count;\n"
    "# absolute numbers are platform-dependent, only the trend is asserted.\n"
)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="evh-bench", description="Desk-scale experiments.")
    sub = parser.add_subparsers(dest="experiment", required=True)

    p = sub.add_parser("latency", help="event-to-first-notification latency")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("memory", help="RSS versus subscriber count")
    p.add_argument("--counts", default="0,30,100,1000,2000,5000",
                   help="comma-separated cumulative subscriber counts")
    p.add_argument("--json", action="store_true", help="machine-readable output")

    args = parser.parse_args(argv)

    if args.experiment == "latency":
        try:
            stats = run_latency(args.runs)
        except ValueError as exc:
            print(f"evh-bench: {exc}", file=sys.stderr)
            return 2
        if args.json:
            print(json.dumps(stats.as_dict()))
        else:
            sys.stdout.write(LATENCY_HEADER)
            fields = " ".join(f"{k}={v}" for k, v in stats.as_dict().items())
            print(fields)
        return 0 if stats.failures == 0 else 1

    try:
        counts = [int(c) for c in args.counts.split(",") if c.strip() != ""]
        rows = run_memory(counts)
    except ValueError as exc:
        print(f"evh-bench: {exc}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps([{"subscribers": c, "rss_kb": r} for c, r in rows]))
    else:
        sys.stdout.write(MEMORY_HEADER)
        sys.stdout.write(memory_csv(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
