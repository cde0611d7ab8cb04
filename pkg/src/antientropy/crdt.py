"""Operation-based register CRDTs with idempotent delivery.

Two register kinds are supported:

* LWW keeps the write with the largest ``(ts, op_id)`` stamp.
* MV keeps every write whose vector clock is not dominated by another
  delivered write (the "siblings").

Both remember the ids of delivered writes, so a redelivered message leaves
the register untouched.  A never-written register queries as the empty set,
which stands for the default value.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

from antientropy.model import LWW, MV, Config, LwwStamp, ModelError, VClock, WriteOp


class Sibling(NamedTuple):
    value: int
    vclock: VClock
    op_id: int


@dataclass(frozen=True, slots=True)
class Register:
    kind: str
    value: int | None = None
    stamp: LwwStamp | None = None
    siblings: frozenset[Sibling] = frozenset()
    # Every delivered write is dominated by (or equal to) the current
    # content, so the ids never change what a redelivery does.  They are
    # bookkeeping and take no part in equality.
    delivered: frozenset[int] = field(default=frozenset(), compare=False)

    def content(self):
        """What a reader can observe; ignores the delivered-id bookkeeping."""
        if self.kind == LWW:
            return (self.value, self.stamp)
        return self.siblings


_FRESH = {LWW: Register(LWW), MV: Register(MV)}


def fresh(kind: str) -> Register:
    return _FRESH[kind]


def vc_leq(a: VClock, b: VClock) -> bool:
    return all(x <= y for x, y in zip(a, b))


def vc_lt(a: VClock, b: VClock) -> bool:
    return a != b and vc_leq(a, b)


def concurrent(a: VClock, b: VClock) -> bool:
    return not vc_leq(a, b) and not vc_leq(b, a)


def _check_kind(reg: Register, op: WriteOp) -> None:
    lww_stamp = isinstance(op.stamp, LwwStamp)
    if (reg.kind == LWW) != lww_stamp:
        raise ModelError(f"{reg.kind} register cannot apply stamp {op.stamp!r}")


def apply(reg: Register, op: WriteOp) -> Register:
    _check_kind(reg, op)
    if op.op_id in reg.delivered:
        return reg
    delivered = reg.delivered | {op.op_id}
    if reg.kind == LWW:
        if reg.stamp is None or op.stamp > reg.stamp:
            return Register(LWW, op.value, op.stamp, delivered=delivered)
        return Register(LWW, reg.value, reg.stamp, delivered=delivered)
    vc = op.stamp
    if any(vc_leq(vc, s.vclock) for s in reg.siblings):
        return Register(MV, siblings=reg.siblings, delivered=delivered)
    kept = frozenset(s for s in reg.siblings if not vc_lt(s.vclock, vc))
    return Register(MV, siblings=kept | {Sibling(op.value, vc, op.op_id)}, delivered=delivered)


def reply(reg: Register) -> Register:
    """The register as sent to a reader: content without delivered ids."""
    if not reg.delivered:
        return reg
    return Register(reg.kind, reg.value, reg.stamp, reg.siblings)


def query(reg: Register) -> frozenset[int]:
    if reg.kind == LWW:
        return frozenset() if reg.stamp is None else frozenset((reg.value,))
    return frozenset(s.value for s in reg.siblings)


def antichain(siblings) -> frozenset[Sibling]:
    sibs = set(siblings)
    return frozenset(s for s in sibs if not any(vc_lt(s.vclock, t.vclock) for t in sibs))


def resolve(kind: str, replies: Sequence[Register]) -> Register:
    """Merge read replies into the state a coordinator would push back."""
    if not replies:
        raise ModelError("resolve needs at least one reply")
    if any(r.kind != kind for r in replies):
        raise ModelError("replies of mixed register kinds")
    if kind == LWW:
        best = replies[0]
        for r in replies[1:]:
            if r.stamp is not None and (best.stamp is None or r.stamp > best.stamp):
                best = r
        return best
    delivered = frozenset().union(*(r.delivered for r in replies))
    siblings = antichain(s for r in replies for s in r.siblings)
    return Register(MV, siblings=siblings, delivered=delivered)


def stamp_for_put(cfg: Config, coordinator: int, clock, op_id: int):
    """Stamp a new write and return ``(stamp, advanced_clock)``.

    ``clock`` is the coordinator's LWW counter (an int) or its vector clock
    for the key, depending on the register kind.
    """
    if cfg.register_kind == LWW:
        ts = clock + 1
        return LwwStamp(ts, op_id), ts
    vc = list(clock)
    vc[coordinator] += 1
    vc = tuple(vc)
    return vc, vc
