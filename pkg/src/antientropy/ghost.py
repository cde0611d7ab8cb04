"""Specification state the protocol never reads.

One write may be tainted.  The ledger tracks, per replica responsible for
its key, where the tainted write currently is: still in the network
(``ps``), parked as a hint at its coordinator (``hs``), or applied to the
replica's local store (``ls``).  Hooks are called by the protocol after each
transfer; nothing in :mod:`antientropy.protocol` inspects the ledger.
"""

from __future__ import annotations

from antientropy import crdt
from antientropy.model import ClusterState, Config, ModelError, TaintLedger, evolve, preference_list


class GhostError(ModelError):
    pass


def _pending_for(s: ClusterState, r: int, op_id: int) -> bool:
    return (r, op_id) in s.pending


def _hinted_for(s: ClusterState, r: int, op_id: int) -> bool:
    return any((r, op_id) in h for h in s.hints)


def taint_write(s: ClusterState, op_id: int) -> ClusterState:
    if s.taint.tainted_op is not None:
        raise GhostError("a write is already tainted")
    if not 0 <= op_id < len(s.ops):
        raise GhostError(f"op {op_id} was never issued")
    key = s.ops[op_id].key
    ps = frozenset(r for r, o in s.pending if o == op_id)
    hs = frozenset(r for h in s.hints for r, o in h if o == op_id)
    ls = frozenset(r for r in range(len(s.alive)) if op_id in s.register(r, key).delivered)
    return evolve(s, taint=TaintLedger(op_id, ps, hs, ls))


def on_put_issued(s: ClusterState, op_id: int, nth_put: int, taint_nth: int | None) -> ClusterState:
    if taint_nth is not None and nth_put == taint_nth:
        return taint_write(s, op_id)
    return s


def on_enqueue(s: ClusterState, r: int, op_id: int) -> ClusterState:
    t = s.taint
    if op_id != t.tainted_op:
        return s
    return evolve(s, taint=evolve(t, ps_tainted_nodes=t.ps_tainted_nodes | {r}))


def _left_network(t: TaintLedger, s: ClusterState, r: int, op_id: int) -> frozenset[int]:
    if _pending_for(s, r, op_id):
        return t.ps_tainted_nodes
    return t.ps_tainted_nodes - {r}


def _left_hints(t: TaintLedger, s: ClusterState, r: int, op_id: int) -> frozenset[int]:
    if _hinted_for(s, r, op_id):
        return t.hs_tainted_nodes
    return t.hs_tainted_nodes - {r}


def on_deliver(s: ClusterState, r: int, op_id: int) -> ClusterState:
    t = s.taint
    if op_id != t.tainted_op:
        return s
    return evolve(s, taint=evolve(
        t, ps_tainted_nodes=_left_network(t, s, r, op_id), ls_tainted_nodes=t.ls_tainted_nodes | {r}))


def on_to_hint(s: ClusterState, r: int, op_id: int) -> ClusterState:
    t = s.taint
    if op_id != t.tainted_op:
        return s
    return evolve(s, taint=evolve(
        t, ps_tainted_nodes=_left_network(t, s, r, op_id), hs_tainted_nodes=t.hs_tainted_nodes | {r}))


def on_handoff(s: ClusterState, r: int, op_id: int) -> ClusterState:
    t = s.taint
    if op_id != t.tainted_op:
        return s
    return evolve(s, taint=evolve(
        t, hs_tainted_nodes=_left_hints(t, s, r, op_id), ls_tainted_nodes=t.ls_tainted_nodes | {r}))


def on_lose(s: ClusterState, r: int, op_id: int) -> ClusterState:
    t = s.taint
    if op_id != t.tainted_op:
        return s
    return evolve(s, taint=evolve(t, ps_tainted_nodes=_left_network(t, s, r, op_id)))


def on_wipe(s: ClusterState, r: int, key: int) -> ClusterState:
    t = s.taint
    if t.tainted_op is None or s.ops[t.tainted_op].key != key:
        return s
    return evolve(s, taint=evolve(t, ls_tainted_nodes=t.ls_tainted_nodes - {r}))


def on_destroy(s: ClusterState, destroyed: tuple[tuple[int, int], ...]) -> ClusterState:
    t = s.taint
    gone = {r for r, o in destroyed if o == t.tainted_op}
    if not gone:
        return s
    still = {r for r in gone if _hinted_for(s, r, t.tainted_op)}
    return evolve(s, taint=evolve(t, hs_tainted_nodes=t.hs_tainted_nodes - (gone - still)))


# -- predicates and measures ---------------------------------------------

def tainted_key(s: ClusterState) -> int:
    if s.taint.tainted_op is None:
        raise GhostError("no write is tainted")
    return s.ops[s.taint.tainted_op].key


def safety_invariant(s: ClusterState, cfg: Config) -> bool:
    t = s.taint
    covered = t.ps_tainted_nodes | t.hs_tainted_nodes | t.ls_tainted_nodes
    return all(r in covered for r in preference_list(cfg, tainted_key(s)))


def rank(s: ClusterState) -> int:
    """Hint entries plus twice the pending messages."""
    return s.hint_count() + 2 * len(s.pending)


def delivery_end_predicate(s: ClusterState, cfg: Config) -> bool:
    return s.taint.ls_tainted_nodes >= set(preference_list(cfg, tainted_key(s)))


def convergence_predicate(s: ClusterState, key: int, live) -> bool:
    seen = {crdt.query(s.register(r, key)) for r in live}
    return len(seen) <= 1


def convergence_rank(s: ClusterState, cfg: Config) -> int:
    """Pending messages, hints, and N for each read repair not yet fired.

    A fired LWW repair enqueues at most N - 1 writes, so the charge of N
    drops by at least one when it fires.
    """
    unfired = sum(1 for c in s.clients if c.repair == 1)
    return len(s.pending) + s.hint_count() + cfg.replication_factor * unfired
