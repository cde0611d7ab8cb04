"""Command-line entry point.

Exit codes: 0 when the run shows what the scenario expects, 1 on a property
violation or an unexpected verdict, 2 when the budget ran out before the
search finished, 3 on usage and input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from collections import Counter
from dataclasses import replace
from pathlib import Path

from antientropy import crdt
from antientropy.model import Budget, ConfigError, ModelError
from antientropy.scenarios import (
    BUILTIN_SCHEDULES,
    Scenario,
    ScenarioError,
    builtin,
    builtin_names,
    parse_scenario,
    serialize,
)
from antientropy.scheduler import (
    BUDGET_EXCEEDED,
    EXHAUSTED,
    WITNESS,
    ConvergenceCheck,
    DeliveryCheck,
    ReplayError,
    Verdict,
    checker_for,
    explore,
    explore_liveness,
    fuzz,
    judge,
    replay,
)

OK, VIOLATION, INCONCLUSIVE, USAGE = 0, 1, 2, 3
TRACE_FORMAT = 1

_DESCRIPTIONS = {
    "s1": "a failed write is still visible to a later read",
    "s2": "a read sees a value a later read does not",
    "s3": "three reads cannot return 2, 1, 0 after four successful writes",
    "s4": "hinted handoff delivers a tainted write once failures stop",
    "fig2": "one read repair leaves live replicas divergent",
    "converge": "repeated reads with read repair make live replicas agree",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


# -- loading ---------------------------------------------------------------

def load_scenario(target: str) -> Scenario:
    if target.startswith("builtin:"):
        return builtin(target.split(":", 1)[1])
    path = Path(target)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {target}: {exc.strerror}") from None
    return parse_scenario(text, name=path.stem)


def _budget(sc: Scenario, args) -> Budget:
    b = sc.budget or Budget()
    changes = {}
    for name, attr in (("max_steps", "max_steps"), ("max_toggles", "max_failure_toggles"),
                       ("max_wipes", "max_wipes"), ("max_losses", "max_losses")):
        v = getattr(args, name)
        if v is not None:
            if v < 0 or (name == "max_steps" and v < 1):
                raise UsageError(f"--{name.replace('_', '-')} out of range: {v}")
            changes[attr] = v
    if args.dedup is not None:
        changes["dedup"] = args.dedup
    return replace(b, **changes)


# -- trace files -------------------------------------------------------------

def trace_document(sc: Scenario, schedule, verdict: Verdict) -> dict:
    records = [r.to_dict() for r in replay(sc, schedule).records] if schedule is not None else []
    return {
        "format": TRACE_FORMAT,
        "scenario_name": sc.name,
        "scenario": serialize(sc),
        "scenario_hash": sc.digest(),
        "verdict": verdict.kind,
        "reason": verdict.reason,
        "states_explored": verdict.states_explored,
        "schedule": list(schedule or ()),
        "records": records,
    }


def write_trace(path: str, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_trace(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not a trace file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != TRACE_FORMAT:
        raise UsageError(f"{path} is not a version {TRACE_FORMAT} trace file")
    for k in ("scenario", "scenario_hash", "schedule", "records"):
        if k not in doc:
            raise UsageError(f"{path}: missing field {k!r}")
    return doc


# -- reporting -----------------------------------------------------------------

class Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def info(self, text: str) -> None:
        if not self.quiet:
            print(text)

    def verdict(self, **fields) -> None:
        print("verdict " + " ".join(f"{k}={v}" for k, v in fields.items()))


def _exit_for(v: Verdict, expected: str) -> int:
    if v.kind == BUDGET_EXCEEDED:
        return INCONCLUSIVE
    return OK if v.kind == expected else VIOLATION


def _report(out: Out, sc: Scenario, v: Verdict, expected: str, label: str, elapsed: float) -> int:
    witnesses = 1 if v.kind == WITNESS else 0
    out.info(f"{sc.name}: {v.kind}, {witnesses} witnesses ({v.states_explored} states, {label})")
    if v.reason:
        out.info(f"  reason: {v.reason}")
    if v.schedule is not None:
        out.info("  schedule: " + " ".join(v.schedule))
    for k, val in sorted(v.stats.items()):
        out.info(f"  {k}: {val}")
    out.info(f"  elapsed: {elapsed:.2f}s")
    code = _exit_for(v, expected)
    stats = {f"stat_{k}": val for k, val in sorted(v.stats.items())}
    out.verdict(scenario=sc.name, check=label, kind=v.kind, witnesses=witnesses,
                states=v.states_explored, expected=expected, **stats, exit=code)
    return code


def _run_search(args, liveness: str | None) -> int:
    sc = load_scenario(args.target)
    budget = _budget(sc, args)
    out = Out(args.quiet)
    t0 = time.perf_counter()
    if liveness is None:
        if not sc.checks:
            raise UsageError(f"{sc.name} has no check to explore")
        checker = checker_for(sc, sc.checks[0])
        v = explore(sc, budget, checker, jobs=args.jobs)
        expected, label = checker.expected, checker.label
    else:
        q = sc.quiesce()
        if q is None or q.mode != liveness:
            raise UsageError(f"{sc.name} does not end with 'quiesce {liveness}'")
        v = explore_liveness(sc, budget, jobs=args.jobs)
        expected = EXHAUSTED
        label = DeliveryCheck.label if liveness == "delivery" else ConvergenceCheck.label
    code = _report(out, sc, v, expected, label, time.perf_counter() - t0)
    if args.out:
        write_trace(args.out, trace_document(sc, v.schedule, v))
        out.info(f"  trace written to {args.out}")
    return code


def cmd_explore(args) -> int:
    return _run_search(args, None)


def cmd_check_delivery(args) -> int:
    return _run_search(args, "delivery")


def cmd_check_converge(args) -> int:
    return _run_search(args, "converge")


def _replay_builtin(name: str, out: Out) -> int:
    if name not in BUILTIN_SCHEDULES:
        raise UsageError(f"builtin {name!r} has no recorded schedule; "
                         f"known: {', '.join(BUILTIN_SCHEDULES)}")
    sc = builtin(name)
    schedule = BUILTIN_SCHEDULES[name]
    trace = replay(sc, schedule)
    for i, r in enumerate(trace.records):
        out.info(f"{i:3d} {r.action:<14} {r.fingerprint} rank={r.rank} crank={r.convergence_rank}")
    s = trace.final
    key = 0
    for rep in range(sc.config.num_replicas):
        state = "up" if s.alive[rep] else "down"
        values = ",".join(map(str, sorted(crdt.query(s.register(rep, key))))) or "-"
        out.info(f"replica {rep} ({state}): {values}")
    checker = checker_for(sc, sc.checks[0])
    why = judge(sc, schedule, checker)
    if why:
        out.info(f"{sc.name}: {why}")
    code = OK if bool(why) == (checker.expected == WITNESS) else VIOLATION
    out.verdict(scenario=sc.name, check=checker.label, steps=len(schedule),
                witness="yes" if why else "no", exit=code)
    return code


def cmd_replay(args) -> int:
    out = Out(args.quiet)
    if args.trace.startswith("builtin:"):
        return _replay_builtin(args.trace.split(":", 1)[1], out)
    doc = read_trace(args.trace)
    sc = parse_scenario(doc["scenario"], name=doc.get("scenario_name") or "trace")
    if sc.digest() != doc["scenario_hash"]:
        out.info("scenario text does not match its recorded hash")
        out.verdict(scenario=sc.name, replay="mismatch", step=-1, exit=VIOLATION)
        return VIOLATION
    schedule = doc["schedule"]
    try:
        trace = replay(sc, schedule)
    except ReplayError as exc:
        out.info(f"replay failed at {exc}")
        out.verdict(scenario=sc.name, replay="failed", step=exc.step, exit=VIOLATION)
        return VIOLATION
    recorded = doc["records"]
    for i, rec in enumerate(r.to_dict() for r in trace.records):
        if i >= len(recorded) or recorded[i] != rec:
            out.info(f"step {i}: recorded {recorded[i] if i < len(recorded) else None} but replay gave {rec}")
            out.verdict(scenario=sc.name, replay="mismatch", step=i, exit=VIOLATION)
            return VIOLATION
    if len(recorded) != len(trace.records):
        i = len(trace.records)
        out.info(f"step {i}: trace records more steps than its schedule")
        out.verdict(scenario=sc.name, replay="mismatch", step=i, exit=VIOLATION)
        return VIOLATION
    why = judge(sc, schedule, checker_for(sc, sc.checks[0])) if sc.checks else None
    reproduced = (why is not None) == (doc.get("verdict") == WITNESS)
    out.info(f"{sc.name}: {len(schedule)} steps replayed identically")
    if why:
        out.info(f"  witness: {why}")
    code = OK if reproduced else VIOLATION
    out.verdict(scenario=sc.name, replay="identical", steps=len(schedule),
                witness="yes" if why else "no", exit=code)
    return code


def cmd_fuzz(args) -> int:
    seed = args.seed
    if seed is None:
        env = os.environ.get("ANTIENTROPY_SEED")
        if env is None:
            raise UsageError("--seed is required unless ANTIENTROPY_SEED is set")
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"ANTIENTROPY_SEED is not an integer: {env!r}") from None
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    sc = load_scenario(args.target)
    budget = _budget(sc, args)
    checker = checker_for(sc, sc.checks[0]) if sc.checks else None
    results = fuzz(sc, seed, args.runs, budget, checker)
    for r in results:
        print(r.line())
    tally = Counter(r.status for r in results)
    witnesses = tally.get("witness", 0)
    # Random runs can refute an exhaustive claim but never establish one.
    bad = checker is not None and checker.expected == EXHAUSTED and witnesses > 0
    code = VIOLATION if bad else OK
    print(f"fuzz scenario={sc.name} seed={seed} runs={args.runs} witnesses={witnesses} "
          f"complete={tally.get('complete', 0)} pruned={tally.get('pruned', 0)} "
          f"truncated={tally.get('truncated', 0)} exit={code}")
    return code


def cmd_list_builtins(args) -> int:
    for name in builtin_names():
        sc = builtin(name)
        check = checker_for(sc, sc.checks[0])
        extra = " (schedule)" if name in BUILTIN_SCHEDULES else ""
        print(f"{name:<9} {check.label:<15} expect {check.expected:<13} {_DESCRIPTIONS.get(name, '')}{extra}")
    return OK


# -- argument parsing ------------------------------------------------------------

def _search_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("target", help="scenario file or builtin:NAME")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--max-toggles", type=int)
    p.add_argument("--max-wipes", type=int)
    p.add_argument("--max-losses", type=int)
    p.add_argument("--dedup", action=argparse.BooleanOptionalAction, default=None,
                   help="prune states already expanded (default on)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="antientropy", description="Interleaving checker for anti-entropy protocols.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, fn, helptext in (
        ("explore", cmd_explore, "search all interleavings for the scenario's check"),
        ("check-delivery", cmd_check_delivery, "eventual delivery after quiescence"),
        ("check-converge", cmd_check_converge, "eventual convergence under repeated reads"),
    ):
        p = sub.add_parser(name, help=helptext)
        _search_options(p)
        p.add_argument("--out", help="write the verdict and any witness trace as JSON")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for subtree search")
        p.add_argument("--quiet", action="store_true", help="print only the verdict line")
        p.set_defaults(func=fn)

    p = sub.add_parser("replay", help="re-execute a trace file or builtin:fig2")
    p.add_argument("trace")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("fuzz", help="seeded random runs")
    _search_options(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int, default=100)
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("list-builtins", help="list the built-in scenarios")
    p.set_defaults(func=cmd_list_builtins)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("antientropy: error: --jobs must be at least 1", file=sys.stderr)
        return USAGE
    try:
        return args.func(args)
    except (UsageError, ScenarioError, ConfigError) as exc:
        print(f"antientropy: error: {exc}", file=sys.stderr)
        return USAGE
    except ModelError as exc:
        print(f"antientropy: model error: {exc}", file=sys.stderr)
        return VIOLATION


if __name__ == "__main__":
    sys.exit(main())
