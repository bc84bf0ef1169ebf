#!/usr/bin/env python3
"""Memory experiment: gateway RSS versus subscriber count.

Adds subscribers through the real protocol and samples the gatewayd
subprocess's resident set size at each count. Absolute numbers are
platform-dependent; the interesting output is the trend and the marginal
cost per subscriber.
"""

import argparse
import json

from evhub.bench import memory_csv, run_memory

DEFAULT_COUNTS = [0, 30, 100, 1000, 2000, 5000]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--counts", default=",".join(str(c) for c in DEFAULT_COUNTS),
                        help="comma-separated cumulative subscriber counts")
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args()

    counts = [int(c) for c in args.counts.split(",") if c.strip()]
    rows = run_memory(counts)
    if args.json:
        print(json.dumps([{"subscribers": c, "rss_kb": r} for c, r in rows]))
    else:
        print(memory_csv(rows), end="")
        if len(rows) >= 2:
            (c0, r0), (c1, r1) = rows[0], rows[-1]
            if c1 > c0:
                print(f"# marginal: {(r1 - r0) / (c1 - c0):.3f} KB/subscriber "
                      f"over {c0}->{c1}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
