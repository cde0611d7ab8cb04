"""Protocol transitions of the key-value store model.

Each function here is one atomic step on a :class:`ClusterState`: the
coordinator issuing a write, the network delivering, parking or losing a
message, a coordinator handing off a hint, replicas answering a read, the
background read repair firing, and failures.  :func:`enabled_actions` lists
every step that can run next; :func:`apply_action` runs one of them.  The
scheduler owns all interleaving.

Client operations run strictly one after another, driven by the scenario
script.  Consequently a repair can only resend a write whose put has already
completed, so deliveries never have to tell put traffic from repair traffic
when recording acks.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

from antientropy import crdt, ghost
from antientropy.model import (
    LWW,
    UNLIMITED,
    Budget,
    ClusterState,
    Config,
    ModelError,
    WriteOp,
    coordinator_of,
    evolve,
    ms_add,
    ms_remove,
    preference_list,
)
from antientropy.scenarios import DestroyHints, Fail, Get, Put, Quiesce, Recover, Scenario, Wipe


class ProtocolError(ModelError):
    """A transition was requested whose precondition does not hold."""


NOT_SPAWNED, SPAWNED, FIRED = 0, 1, 2


@dataclass(frozen=True, slots=True)
class ClientOp:
    kind: str  # "put" | "get"
    key: int
    directive: int  # script index; -1 for reads issued during a convergence check
    value: int | None = None
    op_id: int | None = None
    expect: str = "any"
    waiting: bool = True
    acks: frozenset[int] = frozenset()
    replies: tuple[tuple[int, crdt.Register], ...] = ()
    ok: bool | None = None
    result: frozenset[int] | None = None
    repair: int = NOT_SPAWNED

    @property
    def phase(self) -> str:
        return "Waiting" if self.waiting else "Done"

    def replied(self) -> frozenset[int]:
        return frozenset(r for r, _ in self.replies)


class Action(NamedTuple):
    kind: str
    args: tuple[int, ...] = ()

    def encode(self) -> str:
        if not self.args:
            return self.kind
        return f"{self.kind}:{','.join(map(str, self.args))}"

    @classmethod
    def decode(cls, text: str) -> Action:
        kind, _, rest = text.partition(":")
        if kind not in KIND_ORDER:
            raise ValueError(f"unknown action kind {kind!r}")
        try:
            args = tuple(int(a) for a in rest.split(",")) if rest else ()
        except ValueError:
            raise ValueError(f"bad action arguments in {text!r}") from None
        return cls(kind, args)

    def __str__(self) -> str:
        return self.encode()


KIND_ORDER = (
    "script", "qread", "put_step", "timeout", "read_ls", "get_step", "repair",
    "deliver", "to_hint", "handoff", "lose", "fail", "recover", "wipe", "destroy",
)
_KIND_RANK = {k: i for i, k in enumerate(KIND_ORDER)}
NETWORK_KINDS = frozenset({"deliver", "to_hint", "handoff"})
FAILURE_KINDS = frozenset({"lose", "fail", "recover", "wipe", "destroy"})


def initial_state(sc: Scenario) -> ClusterState:
    cfg = sc.config
    n, nk = cfg.num_replicas, sc.num_keys
    return ClusterState(
        num_keys=nk,
        local=(crdt.fresh(cfg.register_kind),) * (n * nk),
        hints=((),) * n,
        pending=(),
        alive=(True,) * n,
        clients=(),
        ops=(),
        lww_clocks=(0,) * n,
        vclocks=((0,) * n,) * (n * nk),
    )


def _set_client(s: ClusterState, i: int, c: ClientOp) -> ClusterState:
    return evolve(s, clients=s.clients[:i] + (c,) + s.clients[i + 1:])


def _client(s: ClusterState, i: int, kind: str) -> ClientOp:
    if not 0 <= i < len(s.clients) or s.clients[i].kind != kind:
        raise ProtocolError(f"client op {i} is not a {kind}")
    return s.clients[i]


# -- write path -----------------------------------------------------------

def put_start(s: ClusterState, cfg: Config, key: int, value: int, *, coord: int | None = None,
              directive: int = -1, expect: str = "any", taint_nth: int | None = None) -> ClusterState:
    if s.stop:
        raise ProtocolError("put issued during quiescence")
    c = coordinator_of(cfg, key) if coord is None else coord
    op_id = len(s.ops)
    if cfg.register_kind == LWW:
        stamp, clock = crdt.stamp_for_put(cfg, c, s.lww_clocks[c], op_id)
        clocks = dict(lww_clocks=s.lww_clocks[:c] + (clock,) + s.lww_clocks[c + 1:])
    else:
        j = c * s.num_keys + key
        stamp, clock = crdt.stamp_for_put(cfg, c, s.vclocks[j], op_id)
        clocks = dict(vclocks=s.vclocks[:j] + (clock,) + s.vclocks[j + 1:])
    op = WriteOp(op_id, key, value, stamp, c)
    pending = list(s.pending)
    pending.extend((r, op_id) for r in preference_list(cfg, key))
    client = ClientOp("put", key, directive, value=value, op_id=op_id, expect=expect)
    s = evolve(s, ops=s.ops + (op,), pending=tuple(sorted(pending)),
                clients=s.clients + (client,), **clocks)
    nth = sum(1 for x in s.clients if x.kind == "put" and x.directive >= 0)
    return ghost.on_put_issued(s, op_id, nth, taint_nth)


def put_step(s: ClusterState, cfg: Config, i: int) -> ClusterState:
    c = _client(s, i, "put")
    if not c.waiting or len(c.acks) < cfg.write_cl:
        raise ProtocolError(f"put {i} cannot complete")
    return _set_client(s, i, _retire(evolve(c, waiting=False, ok=True)))


def _retire(c: ClientOp) -> ClientOp:
    """Drop bookkeeping a finished op can no longer use.

    Acks stop mattering once a put is decided, and replies once no repair
    is pending; keeping them would split otherwise identical states.
    """
    if c.kind == "put":
        return evolve(c, acks=frozenset())
    if c.repair == SPAWNED:
        return c
    if c.directive < 0:
        # Harness reads are only counted; their results feed nothing.
        return evolve(c, replies=(), result=None)
    return evolve(c, replies=())


def timeout(s: ClusterState, cfg: Config, i: int) -> ClusterState:
    """The coordinator gives up; messages already sent stay in flight."""
    if not 0 <= i < len(s.clients):
        raise ProtocolError(f"no client op {i}")
    c = s.clients[i]
    met = len(c.acks) >= cfg.write_cl if c.kind == "put" else len(c.replies) >= cfg.read_cl
    if not c.waiting or met:
        raise ProtocolError(f"client op {i} cannot time out")
    s = _set_client(s, i, _retire(evolve(c, waiting=False, ok=False)))
    if c.kind == "get" and c.directive >= 0:
        s = evolve(s, reads=s.reads + (None,))
    return s


def network_deliver(s: ClusterState, cfg: Config, r: int, op_id: int) -> ClusterState:
    if not s.alive[r]:
        raise ProtocolError(f"replica {r} is down")
    op = s.ops[op_id]
    s = evolve(s, pending=ms_remove(s.pending, (r, op_id)))
    s = write_ls(s, r, op)
    for i, c in enumerate(s.clients):
        if c.kind == "put" and c.op_id == op_id and c.waiting:
            s = _set_client(s, i, evolve(c, acks=c.acks | {r}))
            break
    return ghost.on_deliver(s, r, op_id)


def network_to_hint(s: ClusterState, cfg: Config, r: int, op_id: int) -> ClusterState:
    if not cfg.hinted_handoff or s.alive[r]:
        raise ProtocolError("message can only become a hint for a down replica with handoff on")
    origin = s.ops[op_id].origin
    hints = list(s.hints)
    hints[origin] = ms_add(hints[origin], (r, op_id))
    s = evolve(s, pending=ms_remove(s.pending, (r, op_id)), hints=tuple(hints))
    return ghost.on_to_hint(s, r, op_id)


def network_lose(s: ClusterState, cfg: Config, r: int, op_id: int) -> ClusterState:
    if cfg.failure_mode != "permanent" or s.stop:
        raise ProtocolError("messages are only lost under permanent failures")
    s = evolve(s, pending=ms_remove(s.pending, (r, op_id)))
    return ghost.on_lose(s, r, op_id)


def handoff_hint(s: ClusterState, cfg: Config, c: int, r: int, op_id: int) -> ClusterState:
    if not s.alive[r]:
        raise ProtocolError(f"replica {r} is down")
    hints = list(s.hints)
    hints[c] = ms_remove(hints[c], (r, op_id))
    s = evolve(s, hints=tuple(hints))
    s = write_ls(s, r, s.ops[op_id])
    return ghost.on_handoff(s, r, op_id)


def write_ls(s: ClusterState, r: int, op: WriteOp) -> ClusterState:
    return s.with_register(r, op.key, crdt.apply(s.register(r, op.key), op))


def read_ls(s: ClusterState, cfg: Config, i: int, r: int) -> ClusterState:
    c = _client(s, i, "get")
    if not s.alive[r] or r in c.replied() or r not in preference_list(cfg, c.key):
        raise ProtocolError(f"replica {r} cannot answer read {i}")
    if not (c.waiting or c.repair == SPAWNED):
        raise ProtocolError(f"read {i} no longer collects replies")
    replies = tuple(sorted(c.replies + ((r, crdt.reply(s.register(r, c.key))),), key=lambda x: x[0]))
    return _set_client(s, i, evolve(c, replies=replies))


# -- read path ------------------------------------------------------------

def get_start(s: ClusterState, cfg: Config, key: int, *, directive: int = -1) -> ClusterState:
    if s.stop and key != s.conv_key:
        raise ProtocolError("only the convergence key may be read during quiescence")
    return evolve(s, clients=s.clients + (ClientOp("get", key, directive),))


def get_step(s: ClusterState, cfg: Config, i: int, subset: tuple[int, ...]) -> ClusterState:
    """Answer the client from exactly R of the replies received so far."""
    c = _client(s, i, "get")
    chosen = [reg for r, reg in c.replies if r in subset]
    if not c.waiting or len(subset) != cfg.read_cl or len(chosen) != len(subset):
        raise ProtocolError(f"read {i} cannot complete from {subset}")
    result = crdt.query(crdt.resolve(cfg.register_kind, chosen))
    repair = SPAWNED if cfg.read_repair else NOT_SPAWNED
    s = _set_client(s, i, _retire(evolve(c, waiting=False, ok=True, result=result, repair=repair)))
    if c.directive >= 0:
        return evolve(s, reads=s.reads + (result,))
    return evolve(s, qreads=s.qreads + 1, settled=s.settled or s.qstart_rank == 0)


def repair_ready(s: ClusterState, cfg: Config, c: ClientOp) -> bool:
    # Once quiescent every replica is up and stays up, so the repair's
    # non-deterministic wait ends with every replica heard from.
    if not s.stop:
        return True
    replied = c.replied()
    return all(r in replied for r in preference_list(cfg, c.key) if s.alive[r])


def read_repair_step(s: ClusterState, cfg: Config, i: int) -> ClusterState:
    c = _client(s, i, "get")
    if c.repair != SPAWNED or not repair_ready(s, cfg, c):
        raise ProtocolError(f"repair of read {i} cannot fire")
    if c.replies:
        resolved = crdt.resolve(cfg.register_kind, [reg for _, reg in c.replies])
        target = resolved.content()
        for r, reg in c.replies:
            if reg.content() == target:
                continue
            if cfg.register_kind == LWW:
                resend = [resolved.stamp.tiebreak]
            else:
                resend = sorted(x.op_id for x in resolved.siblings - reg.siblings)
            for op_id in resend:
                s = evolve(s, pending=ms_add(s.pending, (r, op_id)))
                s = ghost.on_enqueue(s, r, op_id)
    return _set_client(s, i, _retire(evolve(s.clients[i], repair=FIRED)))


# -- failures and quiescence ---------------------------------------------

def fail_replica(s: ClusterState, cfg: Config, r: int) -> ClusterState:
    if s.stop or cfg.failure_mode == "none" or not s.alive[r]:
        raise ProtocolError(f"replica {r} cannot fail now")
    return evolve(s, alive=s.alive[:r] + (False,) + s.alive[r + 1:])


def recover_replica(s: ClusterState, cfg: Config, r: int) -> ClusterState:
    if s.stop or cfg.failure_mode == "none" or s.alive[r]:
        raise ProtocolError(f"replica {r} cannot recover now")
    return evolve(s, alive=s.alive[:r] + (True,) + s.alive[r + 1:])


def wipe_store(s: ClusterState, cfg: Config, r: int, key: int) -> ClusterState:
    if cfg.failure_mode != "permanent" or s.stop:
        raise ProtocolError("stores are only wiped under permanent failures")
    s = s.with_register(r, key, crdt.fresh(cfg.register_kind))
    return ghost.on_wipe(s, r, key)


def destroy_hints(s: ClusterState, cfg: Config, c: int) -> ClusterState:
    if cfg.failure_mode != "permanent" or s.stop:
        raise ProtocolError("hint tables are only destroyed under permanent failures")
    destroyed = s.hints[c]
    s = evolve(s, hints=s.hints[:c] + ((),) + s.hints[c + 1:])
    return ghost.on_destroy(s, destroyed)


def enter_quiescence(s: ClusterState, cfg: Config, mode: str, key: int | None = None) -> ClusterState:
    if any(c.waiting for c in s.clients):
        raise ProtocolError("quiescence requires every client op to have finished")
    # No failures happen from here on, so the spent failure budget and the
    # finished client ops can no longer influence anything.
    live = tuple(c for c in s.clients if c.repair == SPAWNED)
    s = evolve(s, stop=True, mode=mode, alive=(True,) * len(s.alive), used=(0, 0, 0), clients=live)
    if mode == "converge":
        s = evolve(s, conv_key=key, qrank0=ghost.convergence_rank(s, cfg))
    return s


# -- scheduling interface ---------------------------------------------------

def read_gate_open(s: ClusterState, cfg: Config) -> bool:
    """Whether the convergence harness may issue its next read.

    A new read waits until the system has made progress since the previous
    read began (the convergence rank dropped) or has nothing left to do.
    Reads stop once a read begun with nothing left to do has completed.
    The harness also waits for the previous read's repair to fire.
    """
    if s.settled:
        return False
    rk = ghost.convergence_rank(s, cfg)
    return s.qstart_rank is None or rk == 0 or rk < s.qstart_rank


def enabled_actions(s: ClusterState, sc: Scenario, budget: Budget = UNLIMITED) -> list[Action]:
    cfg = sc.config
    acts: list[Action] = []
    if not any(c.waiting for c in s.clients):
        if s.pc < len(sc.script):
            acts.append(Action("script"))
        elif (s.mode == "converge" and read_gate_open(s, cfg)
              and not any(c.repair == SPAWNED for c in s.clients)):
            acts.append(Action("qread"))
    for i, c in enumerate(s.clients):
        if c.kind == "put":
            if c.waiting:
                acts.append(Action("put_step" if len(c.acks) >= cfg.write_cl else "timeout", (i,)))
            continue
        if not (c.waiting or c.repair == SPAWNED):
            continue
        replied = c.replied()
        # Without read repair, replies beyond the R a get uses are never
        # looked at, so collecting them only duplicates interleavings.
        if cfg.read_repair or len(replied) < cfg.read_cl:
            for r in sorted(preference_list(cfg, c.key)):
                if s.alive[r] and r not in replied:
                    acts.append(Action("read_ls", (i, r)))
        if c.waiting:
            if len(replied) >= cfg.read_cl:
                acts.extend(Action("get_step", (i,) + sub)
                            for sub in combinations(sorted(replied), cfg.read_cl))
            elif not s.stop:
                acts.append(Action("timeout", (i,)))
        elif repair_ready(s, cfg, c):
            acts.append(Action("repair", (i,)))

    can_lose = (cfg.failure_mode == "permanent" and not s.stop
                and s.used[2] < budget.max_losses)
    last = None
    for msg in s.pending:
        if msg == last:
            continue
        last = msg
        r, op_id = msg
        if s.alive[r]:
            acts.append(Action("deliver", msg))
        elif cfg.hinted_handoff:
            acts.append(Action("to_hint", msg))
        if can_lose:
            acts.append(Action("lose", msg))
    for c, table in enumerate(s.hints):
        last = None
        for msg in table:
            if msg != last and s.alive[msg[0]]:
                acts.append(Action("handoff", (c,) + msg))
            last = msg

    if not s.stop and cfg.failure_mode != "none":
        if s.used[0] < budget.max_failure_toggles:
            for r, up in enumerate(s.alive):
                acts.append(Action("fail" if up else "recover", (r,)))
        if cfg.failure_mode == "permanent" and s.used[1] < budget.max_wipes:
            for k in range(s.num_keys):
                for r in sorted(preference_list(cfg, k)):
                    acts.append(Action("wipe", (r, k)))
            for c, table in enumerate(s.hints):
                if table:
                    acts.append(Action("destroy", (c,)))
    acts.sort(key=lambda a: (_KIND_RANK[a.kind], a.args))
    return acts


def _run_directive(s: ClusterState, sc: Scenario) -> ClusterState:
    cfg = sc.config
    pc = s.pc
    d = sc.script[pc]
    s = evolve(s, pc=pc + 1)
    if isinstance(d, Put):
        return put_start(s, cfg, d.key, d.value, coord=d.coord, directive=pc,
                         expect=d.expect, taint_nth=sc.taint)
    if isinstance(d, Get):
        return get_start(s, cfg, d.key, directive=pc)
    if isinstance(d, Fail):
        return fail_replica(s, cfg, d.replica) if s.alive[d.replica] else s
    if isinstance(d, Recover):
        return s if s.alive[d.replica] else recover_replica(s, cfg, d.replica)
    if isinstance(d, Wipe):
        return wipe_store(s, cfg, d.replica, d.key)
    if isinstance(d, DestroyHints):
        return destroy_hints(s, cfg, d.coord)
    if isinstance(d, Quiesce):
        return enter_quiescence(s, cfg, d.mode, d.key)
    raise ModelError(f"unknown directive {d!r}")


def _charge(s: ClusterState, slot: int) -> ClusterState:
    used = list(s.used)
    used[slot] += 1
    return evolve(s, used=tuple(used))


def apply_action(s: ClusterState, sc: Scenario, a: Action) -> ClusterState:
    """Run one action; the caller is responsible for it being enabled."""
    cfg = sc.config
    k, args = a.kind, a.args
    if k == "script":
        return _run_directive(s, sc)
    if k == "qread":
        rk = ghost.convergence_rank(s, cfg)
        return evolve(get_start(s, cfg, s.conv_key), qstart_rank=rk)
    if k == "put_step":
        return put_step(s, cfg, *args)
    if k == "timeout":
        return timeout(s, cfg, *args)
    if k == "read_ls":
        return read_ls(s, cfg, *args)
    if k == "get_step":
        return get_step(s, cfg, args[0], args[1:])
    if k == "repair":
        return read_repair_step(s, cfg, *args)
    if k == "deliver":
        return network_deliver(s, cfg, *args)
    if k == "to_hint":
        return network_to_hint(s, cfg, *args)
    if k == "handoff":
        return handoff_hint(s, cfg, *args)
    if k == "lose":
        return _charge(network_lose(s, cfg, *args), 2)
    if k == "fail":
        return _charge(fail_replica(s, cfg, *args), 0)
    if k == "recover":
        return _charge(recover_replica(s, cfg, *args), 0)
    if k == "wipe":
        return _charge(wipe_store(s, cfg, *args), 1)
    if k == "destroy":
        return _charge(destroy_hints(s, cfg, *args), 1)
    raise ModelError(f"unknown action {a}")
