"""Families of scenarios for the delivery and convergence sweeps.

Each generator yields ``(label, scenario)`` pairs built through the text
format, so every swept scenario is also a valid scenario file.
"""

from __future__ import annotations

import time
from collections.abc import Iterator
from dataclasses import dataclass, field

from antientropy.scenarios import Scenario, parse_scenario
from antientropy.scheduler import Verdict, explore_liveness


def _text(n: int, w: int, register: str, hh: str, rr: str, failures: str, budget: str,
          puts: int, tail: list[str], override: bool = False, coords=None) -> str:
    cfg = f"config replicas={n} rf={n} R=1 W={w} register={register} hh={hh} rr={rr} failures={failures}"
    if override:
        cfg += " override=on"
    lines = [cfg, budget]
    for v in range(puts):
        line = f"put k {v} expect=any"
        if coords is not None:
            line += f" coord={coords[v]}"
        lines.append(line)
    return "\n".join(lines + tail) + "\n"


def delivery_family(registers=("lww", "mv")) -> Iterator[tuple[str, Scenario]]:
    """Transient failures with hinted handoff: N in {2,3}, W in {1,2}, 1-2 puts, 2 toggles."""
    for register in registers:
        for n in (2, 3):
            for w in (1, 2):
                for puts in (1, 2):
                    for nth in range(1, puts + 1):
                        label = f"delivery {register} N={n} W={w} puts={puts} taint={nth}"
                        text = _text(n, w, register, "on", "off", "transient",
                                     "budget steps=40 toggles=2 wipes=0 losses=0", puts,
                                     [f"taint {nth}", "quiesce delivery", "check delivery"])
                        yield label, parse_scenario(text, name=label)


def negative_control(register: str = "lww") -> Scenario:
    """Permanent failures without read repair: the tainted write can be lost."""
    text = _text(3, 1, register, "on", "off", "permanent",
                 "budget steps=40 toggles=2 wipes=1 losses=1", 1,
                 ["taint 1", "quiesce delivery", "check delivery"], override=True)
    return parse_scenario(text, name="negative-control")


def convergence_family(registers=("lww", "mv")) -> Iterator[tuple[str, Scenario]]:
    """Permanent failures with read repair: N=3, 1-2 puts, one loss, one wipe.

    Two puts go either through one coordinator (ordered writes) or through
    two (concurrent MV siblings, equal LWW timestamps).
    """
    shapes = (("1 put", 1, None), ("2 puts same coord", 2, (0, 0)), ("2 puts two coords", 2, (0, 1)))
    for register in registers:
        for w in (1, 2):
            for shape, puts, coords in shapes:
                label = f"converge {register} W={w} {shape}"
                text = _text(3, w, register, "off", "on", "permanent",
                             "budget steps=60 toggles=0 wipes=1 losses=1", puts,
                             ["quiesce converge k", "check converge k"], coords=coords)
                yield label, parse_scenario(text, name=label)


@dataclass
class SweepResult:
    label: str
    verdict: Verdict
    seconds: float

    def line(self) -> str:
        v = self.verdict
        stats = " ".join(f"{k}={val}" for k, val in sorted(v.stats.items()))
        msg = f"{self.label}: {v.kind} states={v.states_explored} {stats}"
        if v.reason:
            msg += f" reason={v.reason!r}"
        return msg


@dataclass
class SweepReport:
    results: list[SweepResult] = field(default_factory=list)

    @property
    def kinds(self) -> set[str]:
        return {r.verdict.kind for r in self.results}

    def stat_max(self, name: str) -> int:
        return max((r.verdict.stats.get(name, 0) for r in self.results), default=0)


def run_sweep(family, *, jobs: int = 1, echo=None) -> SweepReport:
    report = SweepReport()
    for label, sc in family:
        t0 = time.perf_counter()
        v = explore_liveness(sc, jobs=jobs)
        res = SweepResult(label, v, time.perf_counter() - t0)
        report.results.append(res)
        if echo is not None:
            echo(res)
    return report
