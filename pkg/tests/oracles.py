"""Independent reference implementations used by the tests.

Nothing here reuses the explorer, the checkers or the CRDT merge code.
The naive enumerator shares only the transition relation
(``enabled_actions`` / ``apply_action``), which is the model under test.
"""

from __future__ import annotations

from itertools import product

from antientropy.protocol import apply_action, enabled_actions, initial_state


# -- naive exhaustive enumeration --------------------------------------------

def _outcomes_ok(s) -> bool:
    for c in s.clients:
        if c.kind == "put" and not c.waiting:
            if c.expect == "ok" and c.ok is not True:
                return False
            if c.expect == "fail" and c.ok is not False:
                return False
    return True


def naive_read_witness(sc, target_reads, max_steps: int) -> tuple[bool, bool]:
    """Plain recursion over every action sequence of length <= max_steps.

    Returns ``(witness_found, truncated)``: whether some sequence makes the
    scripted reads equal ``target_reads`` with every put outcome as
    scripted, and whether some sequence was cut off by the step bound.
    """
    target = tuple(frozenset(r) for r in target_reads)
    truncated = False

    def walk(s, depth) -> bool:
        nonlocal truncated
        if not _outcomes_ok(s):
            return False
        got = tuple(s.reads)
        if got[:len(target)] != target[:len(got)]:
            return False
        if len(got) >= len(target):
            return True
        acts = enabled_actions(s, sc)
        if not acts:
            return False
        if depth == max_steps:
            truncated = True
            return False
        return any(walk(apply_action(s, sc, a), depth + 1) for a in acts)

    return walk(initial_state(sc), 0), truncated


def naive_state_witness(sc, predicate, max_steps: int) -> bool:
    def walk(s, depth) -> bool:
        if predicate(s):
            return True
        if depth == max_steps:
            return False
        return any(walk(apply_action(s, sc, a), depth + 1) for a in enabled_actions(s, sc))

    return walk(initial_state(sc), 0)


# -- register semantics by brute force ----------------------------------------

def lww_expected(ops):
    """Value of the op with the largest (ts, op_id) stamp, or None."""
    if not ops:
        return None
    best = ops[0]
    for op in ops[1:]:
        if (op.stamp.ts, op.stamp.tiebreak) > (best.stamp.ts, best.stamp.tiebreak):
            best = op
    return best.value


def _leq(a, b) -> bool:
    return all(x <= y for x, y in zip(a, b))


def mv_expected(ops) -> frozenset[int]:
    """Values of the delivered ops whose clocks no other delivered op exceeds."""
    distinct = {op.op_id: op for op in ops}.values()
    keep = set()
    for op in distinct:
        dominated = any(_leq(op.stamp, o.stamp) and op.stamp != o.stamp for o in distinct)
        if not dominated:
            keep.add(op.value)
    return frozenset(keep)


def brute_antichain(clocks):
    """Maximal elements under pointwise order, by checking every pair."""
    out = []
    for a in clocks:
        if not any(_leq(a, b) and a != b for b in clocks):
            out.append(a)
    return sorted(set(out))


def all_clocks(width: int, top: int):
    return list(product(range(top + 1), repeat=width))
