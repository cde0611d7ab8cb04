"""Domain types, cluster topology and the global state container.

Every protocol action is a pure function from one :class:`ClusterState` to
the next.  States are frozen and hashable, so the explorer can use them
directly as dedup keys.

Multisets (the network and the hint tables) are stored as sorted tuples of
``(replica, op_id)`` pairs.  Message contents live once in ``ops``, indexed
by op id; a pending entry only names its destination and the write.
"""

from __future__ import annotations

import hashlib
from bisect import bisect_left, insort
from dataclasses import dataclass, field, fields, replace
from typing import TYPE_CHECKING, NamedTuple

if TYPE_CHECKING:
    from antientropy.crdt import Register
    from antientropy.protocol import ClientOp

LWW = "lww"
MV = "mv"
REGISTER_KINDS = (LWW, MV)
FAILURE_MODES = ("none", "transient", "permanent")


class ModelError(Exception):
    """The harness asked the model for something it cannot express."""


class ConfigError(ValueError):
    pass


class LwwStamp(NamedTuple):
    """Client timestamp plus the op id that breaks ties between equal timestamps."""

    ts: int
    tiebreak: int


# A vector clock is a plain tuple with one component per coordinator.
VClock = tuple


class WriteOp(NamedTuple):
    op_id: int
    key: int
    value: int
    stamp: LwwStamp | VClock
    origin: int


@dataclass(frozen=True)
class Config:
    num_replicas: int
    replication_factor: int
    read_cl: int
    write_cl: int
    register_kind: str = LWW
    hinted_handoff: bool = False
    read_repair: bool = False
    failure_mode: str = "none"
    # Permanent failures without read repair can lose writes for good; the
    # flag exists so the negative controls can still be built.
    allow_unsafe: bool = False

    def __post_init__(self) -> None:
        if self.num_replicas < 1:
            raise ConfigError("num_replicas must be >= 1")
        if not 1 <= self.replication_factor <= self.num_replicas:
            raise ConfigError("replication factor must satisfy 1 <= N <= num_replicas")
        if not 1 <= self.read_cl <= self.replication_factor:
            raise ConfigError("read consistency level must satisfy 1 <= R <= N")
        if not 1 <= self.write_cl <= self.replication_factor:
            raise ConfigError("write consistency level must satisfy 1 <= W <= N")
        if self.register_kind not in REGISTER_KINDS:
            raise ConfigError(f"unknown register kind {self.register_kind!r}")
        if self.failure_mode not in FAILURE_MODES:
            raise ConfigError(f"unknown failure mode {self.failure_mode!r}")
        if self.failure_mode == "permanent" and not (self.read_repair or self.allow_unsafe):
            raise ConfigError("permanent failures require read repair (or override=on)")


@dataclass(frozen=True)
class Budget:
    """Bounds on one exploration.

    Failure toggles, wipes (store wipes and hint-table destruction) and
    message losses are counted only when the explorer chooses them; scripted
    failures are free.
    """

    max_steps: int = 40
    max_failure_toggles: int = 0
    max_wipes: int = 0
    max_losses: int = 0
    dedup: bool = True

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if min(self.max_failure_toggles, self.max_wipes, self.max_losses) < 0:
            raise ConfigError("budget bounds must be non-negative")


UNLIMITED = Budget(max_steps=10**9, max_failure_toggles=10**9, max_wipes=10**9, max_losses=10**9)


def preference_list(cfg: Config, key: int) -> list[int]:
    """The N replicas responsible for ``key``; the head is its coordinator."""
    head = key % cfg.num_replicas
    return [(head + j) % cfg.num_replicas for j in range(cfg.replication_factor)]


def coordinator_of(cfg: Config, key: int) -> int:
    return key % cfg.num_replicas


@dataclass(frozen=True, slots=True)
class TaintLedger:
    tainted_op: int | None = None
    ps_tainted_nodes: frozenset[int] = frozenset()
    hs_tainted_nodes: frozenset[int] = frozenset()
    ls_tainted_nodes: frozenset[int] = frozenset()


NO_TAINT = TaintLedger()


@dataclass(frozen=True, slots=True)
class ClusterState:
    num_keys: int
    local: tuple[Register, ...]  # index: replica * num_keys + key
    hints: tuple[tuple[tuple[int, int], ...], ...]  # per coordinator
    pending: tuple[tuple[int, int], ...]
    alive: tuple[bool, ...]
    clients: tuple[ClientOp, ...]
    ops: tuple[WriteOp, ...]
    lww_clocks: tuple[int, ...]  # per coordinator
    vclocks: tuple[VClock, ...]  # index: coordinator * num_keys + key
    taint: TaintLedger = NO_TAINT
    stop: bool = False
    mode: str | None = None  # "delivery" | "converge" once quiescent
    conv_key: int | None = None
    pc: int = 0  # next script directive
    reads: tuple[frozenset[int] | None, ...] = ()  # results of scripted gets
    used: tuple[int, int, int] = (0, 0, 0)  # explorer-chosen toggles, wipes, losses
    qreads: int = 0  # completed quiescent reads
    qrank0: int | None = None  # convergence rank when quiescence began
    qstart_rank: int | None = None  # convergence rank when the last quiescent read began
    settled: bool = False
    _hash: int = field(default=0, init=False, compare=False, repr=False)

    def __hash__(self) -> int:
        h = self._hash
        if not h:
            h = hash((
                self.local, self.hints, self.pending, self.alive, self.clients,
                self.ops, self.lww_clocks, self.vclocks, self.taint, self.stop,
                self.mode, self.conv_key, self.pc, self.reads, self.used,
                self.qreads, self.qrank0, self.qstart_rank, self.settled,
            )) or 1
            object.__setattr__(self, "_hash", h)
        return h

    def register(self, replica: int, key: int) -> Register:
        return self.local[replica * self.num_keys + key]

    def with_register(self, replica: int, key: int, reg: Register) -> ClusterState:
        i = replica * self.num_keys + key
        return evolve(self, local=self.local[:i] + (reg,) + self.local[i + 1:])

    def hint_count(self) -> int:
        return sum(len(h) for h in self.hints)


_COPIERS: dict[type, object] = {}


def _make_copier(cls):
    # One straight-line function per class, in the way dataclasses builds
    # its own methods; much cheaper than a loop over fields().
    lines, env = [], {"_new": object.__new__, "_set": object.__setattr__, "_cls": cls}
    for i, f in enumerate(fields(cls)):
        if f.init:
            lines.append(f"    _set(new, {f.name!r}, kw[{f.name!r}] if {f.name!r} in kw else obj.{f.name})")
        else:
            env[f"_d{i}"] = f.default
            lines.append(f"    _set(new, {f.name!r}, _d{i})")
    src = "def copier(obj, kw):\n    new = _new(_cls)\n" + "\n".join(lines) + "\n    return new\n"
    exec(src, env)
    return env["copier"]


def evolve(obj, **changes):
    """Copy a frozen dataclass with some fields changed.

    Unlike :func:`dataclasses.replace` this skips ``__init__``, which matters
    on the explorer's hot path.  Fields with ``init=False`` (caches) are reset
    to their defaults.
    """
    cls = type(obj)
    copier = _COPIERS.get(cls)
    if copier is None:
        copier = _COPIERS[cls] = _make_copier(cls)
    return copier(obj, changes)


def ms_add(items: tuple, item) -> tuple:
    out = list(items)
    insort(out, item)
    return tuple(out)


def ms_remove(items: tuple, item) -> tuple:
    i = bisect_left(items, item)
    if i == len(items) or items[i] != item:
        raise ModelError(f"{item!r} not in multiset")
    return items[:i] + items[i + 1:]


def _canon(obj):
    if isinstance(obj, (frozenset, set)):
        return tuple(sorted((_canon(x) for x in obj), key=repr))
    if isinstance(obj, tuple):
        return tuple(_canon(x) for x in obj)
    if hasattr(obj, "__dataclass_fields__"):
        return (type(obj).__name__,) + tuple(
            _canon(getattr(obj, f)) for f in obj.__dataclass_fields__ if not f.startswith("_")
        )
    return obj


def state_fingerprint(s: ClusterState, *, ghost: bool = True) -> str:
    """Stable 64-bit hex digest of the whole state.

    With ``ghost=False`` the taint ledger is left out, which yields the
    fingerprint of what the protocol itself can observe.
    """
    if not ghost:
        s = replace(s, taint=NO_TAINT)
    return hashlib.blake2b(repr(_canon(s)).encode(), digest_size=8).hexdigest()
