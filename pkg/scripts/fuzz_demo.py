#!/usr/bin/env python3
"""Seeded random runs over a builtin, with a tally of observed read sequences.

Usage: python scripts/fuzz_demo.py [NAME] [--seed S] [--runs N]
"""

from __future__ import annotations

import argparse
from collections import Counter

from antientropy.scenarios import builtin
from antientropy.scheduler import fuzz


def fmt(reads) -> str:
    return " ".join("?" if r is None else "{" + ",".join(map(str, sorted(r))) + "}" for r in reads) or "-"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("name", nargs="?", default="s2")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--runs", type=int, default=1000)
    args = ap.parse_args()
    results = fuzz(builtin(args.name), args.seed, args.runs)
    print("status:", dict(sorted(Counter(r.status for r in results).items())))
    for reads, n in Counter(r.reads for r in results).most_common(10):
        print(f"{n:6d}  {fmt(reads)}")
    first = next((r for r in results if r.status == "witness"), None)
    if first is not None:
        print(f"first witness: run {first.run} after {first.steps} steps: {first.reason}")


if __name__ == "__main__":
    main()
