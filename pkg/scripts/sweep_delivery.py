#!/usr/bin/env python3
"""Run the eventual-delivery sweep and its negative control.

Usage: python scripts/sweep_delivery.py [--register lww|mv]
Exit status is 0 when every configuration is Exhausted and the negative
control finds a lost write.
"""

from __future__ import annotations

import argparse
import sys

from antientropy import sweeps


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--register", choices=["lww", "mv"], action="append")
    args = ap.parse_args()
    registers = tuple(args.register or ("lww", "mv"))
    report = sweeps.run_sweep(sweeps.delivery_family(registers), echo=lambda r: print(r.line(), flush=True))
    ok = report.kinds == {"Exhausted"}
    for register in registers:
        control = sweeps.run_sweep([(f"negative control {register}", sweeps.negative_control(register))],
                                   echo=lambda r: print(r.line(), flush=True))
        ok = ok and control.kinds == {"WitnessFound"}
    print(f"delivery sweep: {len(report.results)} configurations, {'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
