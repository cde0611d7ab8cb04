from __future__ import annotations

import random
from itertools import combinations_with_replacement, permutations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antientropy import crdt
from antientropy.model import LWW, MV, Config, LwwStamp, ModelError, WriteOp
from oracles import all_clocks, brute_antichain, lww_expected, mv_expected

# Three-op alphabets.  For LWW two ops share a timestamp so the op-id
# tiebreak matters; for MV ``a`` and ``b`` are concurrent and ``c``
# dominates ``a`` but not ``b``.
LWW_ALPHABET = (
    WriteOp(0, 0, 10, LwwStamp(1, 0), 0),
    WriteOp(1, 0, 11, LwwStamp(2, 1), 1),
    WriteOp(2, 0, 12, LwwStamp(2, 2), 2),
)
MV_ALPHABET = (
    WriteOp(0, 0, 10, (1, 0), 0),
    WriteOp(1, 0, 11, (0, 1), 1),
    WriteOp(2, 0, 12, (2, 0), 0),
)
ALPHABETS = {LWW: LWW_ALPHABET, MV: MV_ALPHABET}


def run(kind, ops, start=None):
    reg = start if start is not None else crdt.fresh(kind)
    for op in ops:
        reg = crdt.apply(reg, op)
    return reg


def observed(reg):
    return crdt.query(reg), reg.content()


# -- examples -----------------------------------------------------------------

def test_lww_later_timestamp_wins():
    reg = run(LWW, [WriteOp(0, 0, 0, LwwStamp(1, 0), 0), WriteOp(1, 0, 1, LwwStamp(2, 1), 0)])
    assert (reg.value, reg.stamp) == (1, LwwStamp(2, 1))
    assert crdt.query(reg) == {1}


def test_lww_tiebreak_on_op_id():
    a = WriteOp(3, 0, 0, LwwStamp(2, 3), 0)
    b = WriteOp(5, 0, 1, LwwStamp(2, 5), 1)
    assert run(LWW, [a, b]).value == 1
    assert run(LWW, [b, a]).value == 1


def test_mv_keeps_concurrent_writes():
    reg = run(MV, [WriteOp(0, 0, 1, (1, 0), 0), WriteOp(1, 0, 2, (0, 1), 1)])
    assert crdt.query(reg) == {1, 2}
    assert len(reg.siblings) == 2


def test_mv_dominating_write_replaces():
    reg = run(MV, [WriteOp(0, 0, 1, (1, 0), 0), WriteOp(1, 0, 2, (2, 0), 0)])
    assert crdt.query(reg) == {2}


def test_fresh_register_is_empty():
    assert crdt.query(crdt.fresh(LWW)) == frozenset()
    assert crdt.query(crdt.fresh(MV)) == frozenset()


def test_kind_mismatch_is_rejected():
    with pytest.raises(ModelError):
        crdt.apply(crdt.fresh(LWW), MV_ALPHABET[0])
    with pytest.raises(ModelError):
        crdt.apply(crdt.fresh(MV), LWW_ALPHABET[0])


def test_resolve_lww_picks_max_stamp():
    regs = [run(LWW, [WriteOp(i, 0, v, LwwStamp(ts, i), 0)]) for i, (v, ts) in enumerate([(1, 1), (2, 3), (0, 2)])]
    best = crdt.resolve(LWW, regs)
    assert (best.value, best.stamp.ts) == (2, 3)


def test_resolve_equal_replies_is_identity():
    reg = run(LWW, LWW_ALPHABET[:2])
    assert crdt.resolve(LWW, [reg, reg, reg]) == reg
    mv = run(MV, MV_ALPHABET[:2])
    assert crdt.resolve(MV, [mv, mv]).content() == mv.content()


def test_resolve_mv_is_antichain_of_union():
    a = run(MV, [WriteOp(0, 0, 1, (1, 0), 0)])
    b = run(MV, [WriteOp(1, 0, 2, (0, 1), 1)])
    merged = crdt.resolve(MV, [a, b])
    assert crdt.query(merged) == {1, 2}
    assert sorted(s.vclock for s in merged.siblings) == brute_antichain([(1, 0), (0, 1)])


def test_resolve_needs_replies():
    with pytest.raises(ModelError):
        crdt.resolve(LWW, [])


def test_stamps():
    c = Config(3, 3, 1, 1)
    s1, clk = crdt.stamp_for_put(c, 0, 0, 0)
    s2, _ = crdt.stamp_for_put(c, 0, clk, 1)
    assert s1.ts < s2.ts
    m = Config(3, 3, 1, 1, register_kind=MV)
    v0, _ = crdt.stamp_for_put(m, 0, (0, 0, 0), 0)
    assert v0 == (1, 0, 0)
    v1, _ = crdt.stamp_for_put(m, 1, (0, 0, 0), 1)
    assert crdt.concurrent(v0, v1)
    assert not crdt.vc_leq(v0, v1) and not crdt.vc_leq(v1, v0)


def test_repair_with_older_stamp_keeps_newer_value():
    newer = run(LWW, [WriteOp(1, 0, 2, LwwStamp(3, 1), 0)])
    after = crdt.apply(newer, WriteOp(0, 0, 1, LwwStamp(2, 0), 0))
    assert crdt.query(after) == {2}


def test_antichain_matches_brute_force():
    clocks = all_clocks(2, 2)
    for i in range(len(clocks)):
        for j in range(i, len(clocks)):
            for k in range(j, len(clocks)):
                pick = [clocks[i], clocks[j], clocks[k]]
                sibs = [crdt.Sibling(n, c, n) for n, c in enumerate(pick)]
                got = sorted({s.vclock for s in crdt.antichain(sibs)})
                assert got == brute_antichain(pick)


# -- idempotency ----------------------------------------------------------------

def _random_op(rng: random.Random, kind: str, op_id: int):
    if kind == LWW:
        return WriteOp(op_id, 0, rng.randrange(4), LwwStamp(rng.randrange(1, 5), op_id), rng.randrange(3))
    return WriteOp(op_id, 0, rng.randrange(4), tuple(rng.randrange(3) for _ in range(3)), rng.randrange(3))


def test_idempotency_over_generated_pairs():
    rng = random.Random(20240)
    checked = 0
    for kind in (LWW, MV):
        for _ in range(750):
            pool = [_random_op(rng, kind, i) for i in range(rng.randrange(1, 7))]
            reg = run(kind, rng.sample(pool, rng.randrange(len(pool) + 1)))
            op = rng.choice(pool)
            once = crdt.apply(reg, op)
            twice = crdt.apply(once, op)
            assert twice == once and twice.delivered == once.delivered
            checked += 1
    assert checked >= 1000


@st.composite
def state_and_op(draw, kind):
    ids = draw(st.integers(1, 6))
    pool = []
    for i in range(ids):
        value = draw(st.integers(0, 3))
        if kind == LWW:
            stamp = LwwStamp(draw(st.integers(1, 4)), i)
        else:
            stamp = tuple(draw(st.lists(st.integers(0, 2), min_size=3, max_size=3)))
        pool.append(WriteOp(i, 0, value, stamp, 0))
    history = draw(st.lists(st.sampled_from(pool), max_size=8))
    return run(kind, history), draw(st.sampled_from(pool))


@settings(max_examples=500)
@given(st.sampled_from([LWW, MV]).flatmap(state_and_op))
def test_idempotency_property(pair):
    reg, op = pair
    once = crdt.apply(reg, op)
    assert crdt.apply(once, op) == once


@settings(max_examples=500)
@given(st.sampled_from([LWW, MV]).flatmap(state_and_op))
def test_delivered_writes_are_dominated_by_content(pair):
    # Why delivered ids can stay out of register equality.
    reg, op = pair
    reg = crdt.apply(reg, op)
    if reg.kind == LWW:
        assert op.stamp <= reg.stamp
    else:
        assert any(crdt.vc_leq(op.stamp, s.vclock) for s in reg.siblings)
    again = crdt.apply(crdt.Register(reg.kind, reg.value, reg.stamp, reg.siblings), op)
    assert again.content() == reg.content()


@settings(max_examples=300)
@given(st.sampled_from([LWW, MV]).flatmap(state_and_op))
def test_siblings_form_an_antichain(pair):
    reg, op = pair
    sibs = crdt.apply(reg, op).siblings
    for a in sibs:
        for b in sibs:
            assert a == b or not crdt.vc_lt(a.vclock, b.vclock)


# -- permutation convergence -------------------------------------------------------

def _multisets(alphabet, max_size=5):
    for size in range(max_size + 1):
        yield from combinations_with_replacement(alphabet, size)


@pytest.mark.parametrize("kind", [LWW, MV])
def test_every_permutation_converges(kind):
    alphabet = ALPHABETS[kind]
    multisets = perms = 0
    for ms in _multisets(alphabet):
        multisets += 1
        expected = None
        for order in set(permutations(ms)):
            perms += 1
            reg = run(kind, order)
            if expected is None:
                expected = observed(reg)
            assert observed(reg) == expected, (ms, order)
        if kind == LWW:
            want = lww_expected(list(ms))
            assert expected[0] == (frozenset() if want is None else {want})
        else:
            assert expected[0] == mv_expected(list(ms))
    assert multisets == 56  # C(3+5, 5)
    assert perms > multisets


def test_lww_oracle_on_alphabet():
    assert lww_expected(list(LWW_ALPHABET)) == 12
    assert mv_expected(list(MV_ALPHABET)) == {11, 12}
