"""Systematic exploration of action interleavings.

:func:`explore` walks every sequence of enabled actions depth first, up to
``budget.max_steps``.  With ``budget.dedup`` a state already expanded at the
same or a smaller depth is not expanded again, which keeps the bounded
search complete.  What counts as a witness is decided by a
:class:`Checker`; the built-in checkers turn a scenario's ``check`` lines
into state, transition and terminal-state predicates.

:func:`replay` re-executes a schedule and fails loudly at the first action
that is not enabled.  :func:`fuzz` picks uniformly among enabled actions
with a seeded generator.
"""

from __future__ import annotations

import copy
import hashlib
import random
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from antientropy import ghost
from antientropy.model import UNLIMITED, Budget, ClusterState, ModelError, preference_list, state_fingerprint
from antientropy.protocol import (
    FIRED,
    NETWORK_KINDS,
    SPAWNED,
    Action,
    apply_action,
    enabled_actions,
    initial_state,
)
from antientropy.scenarios import (
    Convergence,
    Divergence,
    EventualDelivery,
    ExistsRead,
    ForallNoRead,
    Scenario,
)

__all__ = [
    "Budget", "Verdict", "Trace", "StepRecord", "RunSummary", "ReplayError",
    "Checker", "ReadCheck", "DivergenceCheck", "DeliveryCheck", "ConvergenceCheck",
    "PredicateCheck", "checker_for", "explore", "explore_liveness", "replay", "judge", "fuzz",
]

WITNESS = "WitnessFound"
EXHAUSTED = "Exhausted"
BUDGET_EXCEEDED = "BudgetExceeded"


class ReplayError(ModelError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class Verdict:
    kind: str
    states_explored: int
    schedule: tuple[str, ...] | None = None
    reason: str | None = None
    stats: dict = field(default_factory=dict)

    @property
    def witness(self) -> bool:
        return self.kind == WITNESS


def assumptions_violated(s: ClusterState) -> bool:
    """A put finished with an outcome other than the one the script expects."""
    for c in s.clients:
        if c.kind == "put" and not c.waiting:
            if (c.expect == "ok" and not c.ok) or (c.expect == "fail" and c.ok):
                return True
    return False


class Checker:
    """Witness conditions for one exploration.

    ``state`` is evaluated on every reached state, ``transition`` on every
    executed action and ``terminal`` on states with no enabled action.  Each
    returns a reason string when it has found a witness.
    """

    expected = EXHAUSTED
    label = "check"

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.cfg = sc.config
        self.stats: dict = {}

    def prune(self, s: ClusterState) -> bool:
        return assumptions_violated(s)

    def state(self, s: ClusterState) -> str | None:
        return None

    def transition(self, prev: ClusterState, a: Action, nxt: ClusterState) -> str | None:
        return None

    def terminal(self, s: ClusterState) -> str | None:
        return None


class PredicateCheck(Checker):
    def __init__(self, sc: Scenario, predicate: Callable[[ClusterState], bool]):
        super().__init__(sc)
        self.predicate = predicate
        self.label = getattr(predicate, "__name__", "predicate")

    def state(self, s):
        return "predicate holds" if self.predicate(s) else None


class ReadCheck(Checker):
    """Scripted reads return exactly the given value sets, in order."""

    def __init__(self, sc: Scenario, reads: Sequence[frozenset[int]], exists: bool):
        super().__init__(sc)
        self.reads = tuple(reads)
        self.expected = WITNESS if exists else EXHAUSTED
        self.label = "exists-read" if exists else "forall-no-read"

    def prune(self, s):
        n = min(len(s.reads), len(self.reads))
        return s.reads[:n] != self.reads[:n] or assumptions_violated(s)

    def state(self, s):
        if len(s.reads) >= len(self.reads):
            return "reads returned " + " ".join(_fmt(v) for v in self.reads)
        return None


def _fmt(values) -> str:
    if values is None:
        return "failed"
    return "{" + ",".join(map(str, sorted(values))) + "}"


def live_replicas(s: ClusterState, cfg, key: int) -> list[int]:
    return [r for r in preference_list(cfg, key) if s.alive[r]]


class DivergenceCheck(Checker):
    """A quiet state after a completed read repair where live replicas disagree."""

    expected = WITNESS
    label = "diverge"

    def __init__(self, sc: Scenario, key: int):
        super().__init__(sc)
        self.key = key

    def state(self, s):
        if s.pc < len(self.sc.script) or any(c.waiting or c.repair == SPAWNED for c in s.clients):
            return None
        if not any(c.kind == "get" and c.key == self.key and c.repair == FIRED for c in s.clients):
            return None
        if any(s.alive[r] for r, _ in s.pending) or any(s.alive[r] for h in s.hints for r, _ in h):
            return None
        live = live_replicas(s, self.cfg, self.key)
        if len(live) >= 2 and not ghost.convergence_predicate(s, self.key, live):
            return f"live replicas {live} disagree after read repair"
        return None


class DeliveryCheck(Checker):
    """Eventual delivery of the tainted write once the system is quiescent."""

    label = "delivery"

    def __init__(self, sc: Scenario):
        super().__init__(sc)
        self.stats = {"quiescent_states": 0, "terminal_states": 0, "max_rank": 0}

    def state(self, s):
        if not s.stop:
            return None
        self.stats["quiescent_states"] += 1
        self.stats["max_rank"] = max(self.stats["max_rank"], ghost.rank(s))
        if not ghost.safety_invariant(s, self.cfg):
            return "safety invariant violated: a responsible replica is in no taint set"
        return None

    def transition(self, prev, a, nxt):
        if not prev.stop:
            return None
        before, after = ghost.rank(prev), ghost.rank(nxt)
        if a.kind in NETWORK_KINDS and after >= before:
            return f"rank did not decrease on {a} ({before} -> {after})"
        if after > before:
            return f"rank increased on {a} ({before} -> {after})"
        return None

    def terminal(self, s):
        if not s.stop:
            return None
        self.stats["terminal_states"] += 1
        if ghost.rank(s) != 0:
            return f"stuck with rank {ghost.rank(s)}"
        if not ghost.delivery_end_predicate(s, self.cfg):
            missing = sorted(set(preference_list(self.cfg, ghost.tainted_key(s)))
                             - s.taint.ls_tainted_nodes)
            return f"tainted write never reached replicas {missing}"
        return None


class ConvergenceCheck(Checker):
    """Repeated reads after quiescence bring every live replica to one value."""

    label = "converge"

    def __init__(self, sc: Scenario, key: int):
        super().__init__(sc)
        self.key = key
        self.stats = {"terminal_states": 0, "max_reads": 0, "max_initial_rank": 0}

    def transition(self, prev, a, nxt):
        if not prev.stop:
            return None
        kinds = NETWORK_KINDS | ({"repair"} if self.cfg.register_kind == "lww" else set())
        if a.kind in kinds:
            before = ghost.convergence_rank(prev, self.cfg)
            after = ghost.convergence_rank(nxt, self.cfg)
            if after >= before:
                return f"convergence rank did not decrease on {a} ({before} -> {after})"
        return None

    def terminal(self, s):
        if not s.stop:
            return None
        st = self.stats
        st["terminal_states"] += 1
        st["max_reads"] = max(st["max_reads"], s.qreads)
        st["max_initial_rank"] = max(st["max_initial_rank"], s.qrank0)
        if not s.settled:
            return "reads stopped before the system drained"
        live = live_replicas(s, self.cfg, self.key)
        if not ghost.convergence_predicate(s, self.key, live):
            return f"live replicas {live} never converged"
        if s.qreads > s.qrank0 + 1:
            return f"{s.qreads} reads needed, more than initial rank {s.qrank0} + 1"
        return None


def checker_for(sc: Scenario, check) -> Checker:
    if isinstance(check, ExistsRead):
        return ReadCheck(sc, check.reads, exists=True)
    if isinstance(check, ForallNoRead):
        return ReadCheck(sc, check.reads, exists=False)
    if isinstance(check, Divergence):
        return DivergenceCheck(sc, check.key)
    if isinstance(check, EventualDelivery):
        return DeliveryCheck(sc)
    if isinstance(check, Convergence):
        return ConvergenceCheck(sc, check.key)
    raise ModelError(f"no checker for {check!r}")


def _as_checker(sc: Scenario, predicate) -> Checker:
    if predicate is None:
        if not sc.checks:
            return Checker(sc)
        return checker_for(sc, sc.checks[0])
    if isinstance(predicate, Checker):
        return predicate
    return PredicateCheck(sc, predicate)


def _budget(sc: Scenario, budget: Budget | None) -> Budget:
    if budget is not None:
        return budget
    return sc.budget or Budget()


# -- exhaustive search ---------------------------------------------------

def _search(sc: Scenario, budget: Budget, checker: Checker, root: ClusterState,
            prefix: tuple[str, ...] = ()) -> Verdict:
    if not budget.dedup:
        return _dfs(sc, budget, checker, root, prefix, depth_aware=False)
    # A plain seen-set is complete as long as no path hits the step bound:
    # every skipped state then had its whole subtree explored already.  Only
    # when something was cut off do revisits at smaller depth matter.
    stats = copy.deepcopy(checker.stats)
    first = _dfs(sc, budget, checker, root, prefix, depth_aware=False)
    if first.kind != BUDGET_EXCEEDED:
        return first
    checker.stats = stats
    second = _dfs(sc, budget, checker, root, prefix, depth_aware=True)
    second.states_explored += first.states_explored
    return second


def _dfs(sc: Scenario, budget: Budget, checker: Checker, root: ClusterState,
         prefix: tuple[str, ...], depth_aware: bool) -> Verdict:
    visited: dict[ClusterState, int] = {}
    count = 0
    truncated = False
    path: list[str] = list(prefix)
    base = len(prefix)

    def enter(state: ClusterState, depth: int):
        nonlocal count, truncated
        if budget.dedup:
            seen = visited.get(state)
            if seen is not None and (seen <= depth or not depth_aware):
                return None, None
            visited[state] = depth
        count += 1
        if checker.prune(state):
            return None, None
        why = checker.state(state)
        if why:
            return why, None
        acts = enabled_actions(state, sc, budget)
        if not acts:
            return checker.terminal(state), None
        if depth >= budget.max_steps:
            truncated = True
            return None, None
        return None, acts

    def found(why: str) -> Verdict:
        return Verdict(WITNESS, count, tuple(path), why, dict(checker.stats))

    why, acts = enter(root, base)
    if why:
        return found(why)
    stack = [(root, iter(acts))] if acts else []
    while stack:
        state, it = stack[-1]
        a = next(it, None)
        if a is None:
            stack.pop()
            if len(path) > base:
                path.pop()
            continue
        nxt = apply_action(state, sc, a)
        path.append(a.encode())
        why = checker.transition(state, a, nxt)
        if why:
            return found(why)
        why, acts = enter(nxt, len(path))
        if why:
            return found(why)
        if acts:
            stack.append((nxt, iter(acts)))
        else:
            path.pop()
    kind = BUDGET_EXCEEDED if truncated else EXHAUSTED
    return Verdict(kind, count, None, None, dict(checker.stats))


def _subtree(args) -> Verdict:
    sc, budget, checker, state, prefix = args
    return _search(sc, budget, checker, state, prefix)


def _merge_stats(into: dict, other: dict) -> None:
    for k, v in other.items():
        if k.startswith("max_"):
            into[k] = max(into.get(k, 0), v)
        else:
            into[k] = into.get(k, 0) + v


def _parallel(sc: Scenario, budget: Budget, checker: Checker, jobs: int) -> Verdict:
    # Expand breadth first until there are enough independent subtrees, then
    # search each in its own process.  Subtrees do not share dedup tables, so
    # counts differ from the serial search but are stable for a given ``jobs``.
    count = 0
    truncated = False
    frontier = [(initial_state(sc), ())]
    while frontier and len(frontier) < 4 * jobs:
        nxt_frontier = []
        for state, prefix in frontier:
            count += 1
            if checker.prune(state):
                continue
            why = checker.state(state)
            if why:
                return Verdict(WITNESS, count, prefix, why, dict(checker.stats))
            acts = enabled_actions(state, sc, budget)
            if not acts:
                why = checker.terminal(state)
                if why:
                    return Verdict(WITNESS, count, prefix, why, dict(checker.stats))
                continue
            if len(prefix) >= budget.max_steps:
                truncated = True
                continue
            for a in acts:
                nxt = apply_action(state, sc, a)
                why = checker.transition(state, a, nxt)
                if why:
                    return Verdict(WITNESS, count, prefix + (a.encode(),), why, dict(checker.stats))
                nxt_frontier.append((nxt, prefix + (a.encode(),)))
        frontier = nxt_frontier
    stats = dict(checker.stats)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_subtree, [(sc, budget, checker, st, p) for st, p in frontier]))
    for v in results:
        count += v.states_explored
        _merge_stats(stats, v.stats)
        if v.kind == WITNESS:
            return Verdict(WITNESS, count, v.schedule, v.reason, stats)
        truncated = truncated or v.kind == BUDGET_EXCEEDED
    return Verdict(BUDGET_EXCEEDED if truncated else EXHAUSTED, count, None, None, stats)


def explore(scenario: Scenario, budget: Budget | None = None, predicate=None, *,
            jobs: int = 1) -> Verdict:
    """Search every interleaving of ``scenario`` for a witness.

    ``predicate`` is a :class:`Checker`, a plain state predicate, or None
    for the scenario's first check.  An ``Exhausted`` verdict means the whole
    bounded space was covered without a witness; ``BudgetExceeded`` means
    some path hit ``max_steps`` with actions still enabled.
    """
    budget = _budget(scenario, budget)
    checker = _as_checker(scenario, predicate)
    if jobs > 1:
        return _parallel(scenario, budget, checker, jobs)
    return _search(scenario, budget, checker, initial_state(scenario))


def explore_liveness(scenario: Scenario, budget: Budget | None = None, *, jobs: int = 1) -> Verdict:
    """Check eventual delivery or eventual convergence after the scenario quiesces.

    Every completion from every quiescent state is explored.  Quiescent
    phases are finite (each remaining network step lowers a rank), so
    exhausting them covers all fair runs.  A witness is a counterexample.
    """
    q = scenario.quiesce()
    if q is None or not scenario.script or scenario.script[-1] is not q:
        raise ModelError("liveness checks need a scenario that ends with quiesce")
    if q.mode == "delivery":
        if scenario.taint is None:
            raise ModelError("delivery check needs a tainted put")
        checker: Checker = DeliveryCheck(scenario)
    else:
        checker = ConvergenceCheck(scenario, q.key)
    return explore(scenario, budget, checker, jobs=jobs)


# -- replay -------------------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    action: str
    fingerprint: str
    rank: int
    convergence_rank: int
    ghost: tuple[int, int, int]  # sizes of ps, hs, ls taint sets

    def to_dict(self) -> dict:
        return {"action": self.action, "fingerprint": self.fingerprint, "rank": self.rank,
                "convergence_rank": self.convergence_rank, "ghost": list(self.ghost)}

    @classmethod
    def from_dict(cls, d: dict) -> StepRecord:
        return cls(d["action"], d["fingerprint"], d["rank"], d["convergence_rank"], tuple(d["ghost"]))


@dataclass
class Trace:
    scenario_hash: str
    schedule: tuple[str, ...]
    records: list[StepRecord]
    final: ClusterState
    verdict: str | None = None


def _record(sc: Scenario, a: str, s: ClusterState) -> StepRecord:
    t = s.taint
    return StepRecord(a, state_fingerprint(s), ghost.rank(s), ghost.convergence_rank(s, sc.config),
                      (len(t.ps_tainted_nodes), len(t.hs_tainted_nodes), len(t.ls_tainted_nodes)))


def run_schedule(scenario: Scenario, schedule: Sequence[str], budget: Budget = UNLIMITED):
    """Yield ``(action, state)`` for each step; raises :class:`ReplayError`."""
    s = initial_state(scenario)
    for i, text in enumerate(schedule):
        try:
            a = Action.decode(text)
        except ValueError as exc:
            raise ReplayError(i, str(exc)) from None
        if a not in enabled_actions(s, scenario, budget):
            raise ReplayError(i, f"action {text} is not enabled")
        s = apply_action(s, scenario, a)
        yield a, s


def replay(scenario: Scenario, schedule: Sequence[str], budget: Budget = UNLIMITED) -> Trace:
    records = []
    s = initial_state(scenario)
    for a, s in run_schedule(scenario, schedule, budget):
        records.append(_record(scenario, a.encode(), s))
    return Trace(scenario.digest(), tuple(schedule), records, s)


def judge(scenario: Scenario, schedule: Sequence[str], predicate=None) -> str | None:
    """Evaluate a checker along one schedule; the first witness reason, if any.

    A schedule that breaks a scripted assumption never counts as a witness.
    """
    checker = _as_checker(scenario, predicate)
    s = initial_state(scenario)
    steps = iter(run_schedule(scenario, schedule))
    while True:
        if checker.prune(s):
            return None
        why = checker.state(s)
        if why:
            return why
        nxt = next(steps, None)
        if nxt is None:
            break
        a, new = nxt
        why = checker.transition(s, a, new)
        if why:
            return why
        s = new
    if not enabled_actions(s, scenario):
        return checker.terminal(s)
    return None


# -- randomized runs ------------------------------------------------------------

@dataclass(frozen=True)
class RunSummary:
    run: int
    steps: int
    status: str  # witness | complete | pruned | truncated
    reads: tuple[frozenset[int] | None, ...]
    trace_hash: str
    reason: str | None = None

    def line(self) -> str:
        reads = ";".join(_fmt(v) for v in self.reads) or "-"
        return f"run={self.run} steps={self.steps} status={self.status} reads={reads} hash={self.trace_hash}"


def fuzz(scenario: Scenario, seed: int, runs: int, budget: Budget | None = None,
         predicate=None) -> list[RunSummary]:
    if runs < 1:
        raise ValueError("runs must be >= 1")
    budget = _budget(scenario, budget)
    checker = _as_checker(scenario, predicate)
    rng = random.Random(seed)
    out = []
    for run in range(runs):
        s = initial_state(scenario)
        h = hashlib.blake2b(digest_size=8)
        steps, status, reason = 0, "truncated", None
        while True:
            if checker.prune(s):
                status = "pruned"
                break
            reason = checker.state(s)
            if reason:
                status = "witness"
                break
            acts = enabled_actions(s, scenario, budget)
            if not acts:
                reason = checker.terminal(s)
                status = "witness" if reason else "complete"
                break
            if steps >= budget.max_steps:
                break
            a = acts[rng.randrange(len(acts))]
            nxt = apply_action(s, scenario, a)
            h.update(a.encode().encode() + b"\n")
            steps += 1
            reason = checker.transition(s, a, nxt)
            s = nxt
            if reason:
                status = "witness"
                break
        h.update(state_fingerprint(s).encode())
        out.append(RunSummary(run, steps, status, s.reads, h.hexdigest(), reason))
    return out
