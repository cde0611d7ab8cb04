#!/usr/bin/env python3
"""Run the convergence sweep and report the largest number of reads needed.

Usage: python scripts/sweep_convergence.py [--register lww|mv] [--jobs N]
"""

from __future__ import annotations

import argparse
import sys

from antientropy import sweeps


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--register", choices=["lww", "mv"], action="append")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    registers = tuple(args.register or ("lww", "mv"))
    report = sweeps.run_sweep(sweeps.convergence_family(registers), jobs=args.jobs,
                              echo=lambda r: print(f"{r.line()} ({r.seconds:.1f}s)", flush=True))
    ok = report.kinds == {"Exhausted"}
    within = all(r.verdict.stats["max_reads"] <= r.verdict.stats["max_initial_rank"] + 1
                 for r in report.results)
    print(f"convergence sweep: {len(report.results)} configurations, "
          f"max reads {report.stat_max('max_reads')}, "
          f"max initial rank {report.stat_max('max_initial_rank')}, "
          f"{'ok' if ok and within else 'FAILED'}")
    return 0 if ok and within else 1


if __name__ == "__main__":
    sys.exit(main())
