"""Scenario scripts: client workload, scripted failures, quiescence and checks.

A scenario is written in a small line-oriented format::

    # comment
    config replicas=3 rf=3 R=1 W=2 register=lww hh=off rr=off failures=none
    budget steps=40 toggles=0 wipes=0 losses=0
    put k 0 expect=ok
    put k 1 expect=fail
    get k
    check exists-read 1

Directives run one after another; a directive starts only once the previous
client operation has finished.  ``taint N`` marks the N-th put (1-based) for
the eventual-delivery ghost and is not itself a step.  Read checks take one
value set per read: ``1``, ``1,2`` for siblings, ``_`` for the default value.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

from antientropy.model import FAILURE_MODES, REGISTER_KINDS, Budget, Config, ConfigError


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Put:
    key: int
    value: int
    expect: str = "any"  # ok | fail | any
    coord: int | None = None


@dataclass(frozen=True)
class Get:
    key: int


@dataclass(frozen=True)
class Fail:
    replica: int


@dataclass(frozen=True)
class Recover:
    replica: int


@dataclass(frozen=True)
class Wipe:
    replica: int
    key: int


@dataclass(frozen=True)
class DestroyHints:
    coord: int


@dataclass(frozen=True)
class Quiesce:
    mode: str  # delivery | converge
    key: int | None = None


@dataclass(frozen=True)
class ExistsRead:
    reads: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class ForallNoRead:
    reads: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class EventualDelivery:
    pass


@dataclass(frozen=True)
class Convergence:
    key: int


@dataclass(frozen=True)
class Divergence:
    """A quiet state after a completed read repair where live replicas disagree."""

    key: int


Directive = Put | Get | Fail | Recover | Wipe | DestroyHints | Quiesce
Check = ExistsRead | ForallNoRead | EventualDelivery | Convergence | Divergence


@dataclass(frozen=True)
class Scenario:
    config: Config
    script: tuple[Directive, ...] = ()
    checks: tuple[Check, ...] = ()
    keys: tuple[str, ...] = ("k",)
    taint: int | None = None
    budget: Budget | None = None
    name: str | None = field(default=None, compare=False)

    @property
    def num_keys(self) -> int:
        return max(1, len(self.keys))

    @property
    def puts(self) -> list[Put]:
        return [d for d in self.script if isinstance(d, Put)]

    def quiesce(self) -> Quiesce | None:
        return next((d for d in self.script if isinstance(d, Quiesce)), None)

    def digest(self) -> str:
        # The name is a label, not content; equal scenarios share a digest.
        return hashlib.sha256(serialize(replace(self, name=None)).encode()).hexdigest()[:16]


def validate(sc: Scenario, lines: dict[int, int] | None = None) -> None:
    cfg = sc.config
    lines = lines or {}

    def fail(msg: str, idx: int | None = None):
        where = lines.get(idx) if idx is not None else None
        raise ScenarioError(f"line {where}: {msg}" if where else msg)

    def replica(r: int, idx: int) -> None:
        if not 0 <= r < cfg.num_replicas:
            fail(f"replica {r} out of range 0..{cfg.num_replicas - 1}", idx)

    def key(k: int | None, idx: int | None) -> None:
        if k is None or not 0 <= k < len(sc.keys):
            fail(f"key {k} out of range", idx)

    quiesced = False
    for i, d in enumerate(sc.script):
        if quiesced:
            fail("no directive may follow quiesce", i)
        if isinstance(d, Put):
            key(d.key, i)
            if d.expect not in ("ok", "fail", "any"):
                fail(f"bad expectation {d.expect!r}", i)
            if d.coord is not None:
                replica(d.coord, i)
        elif isinstance(d, Get):
            key(d.key, i)
        elif isinstance(d, (Fail, Recover)):
            replica(d.replica, i)
            if cfg.failure_mode == "none":
                fail("fail/recover need failures=transient or permanent", i)
        elif isinstance(d, Wipe):
            replica(d.replica, i)
            key(d.key, i)
            if cfg.failure_mode != "permanent":
                fail("wipe needs failures=permanent", i)
        elif isinstance(d, DestroyHints):
            replica(d.coord, i)
            if cfg.failure_mode != "permanent":
                fail("destroy needs failures=permanent", i)
        elif isinstance(d, Quiesce):
            quiesced = True
            if d.mode == "converge":
                key(d.key, i)
            elif d.mode != "delivery":
                fail(f"unknown quiesce mode {d.mode!r}", i)
        else:
            fail(f"unknown directive {d!r}", i)

    if sc.taint is not None and not 1 <= sc.taint <= len(sc.puts):
        fail(f"taint {sc.taint} names no put", -1)
    q = sc.quiesce()
    for j, c in enumerate(sc.checks):
        idx = -(j + 2)
        if isinstance(c, EventualDelivery):
            if sc.taint is None:
                fail("delivery check requires a taint directive", idx)
            if q is None or q.mode != "delivery":
                fail("delivery check requires quiesce delivery", idx)
        elif isinstance(c, Convergence):
            key(c.key, idx)
            if q is None or q.mode != "converge" or q.key != c.key:
                fail("converge check requires quiesce converge on the same key", idx)
        elif isinstance(c, Divergence):
            key(c.key, idx)


# -- text format ---------------------------------------------------------

_ONOFF = {"on": True, "off": False}


def _values(tok: str) -> frozenset[int]:
    if tok == "_":
        return frozenset()
    return frozenset(int(v) for v in tok.split(","))


def _fmt_values(vs: frozenset[int]) -> str:
    return ",".join(str(v) for v in sorted(vs)) if vs else "_"


def _parse_config(args: list[str]) -> Config:
    kv = dict(a.split("=", 1) for a in args)
    known = {"replicas", "rf", "R", "W", "register", "hh", "rr", "failures", "override"}
    unknown = set(kv) - known
    if unknown:
        raise ValueError(f"unknown config fields {sorted(unknown)}")
    if kv.get("register", "lww") not in REGISTER_KINDS:
        raise ValueError(f"register must be one of {REGISTER_KINDS}")
    if kv.get("failures", "none") not in FAILURE_MODES:
        raise ValueError(f"failures must be one of {FAILURE_MODES}")
    return Config(
        num_replicas=int(kv["replicas"]),
        replication_factor=int(kv.get("rf", kv["replicas"])),
        read_cl=int(kv["R"]),
        write_cl=int(kv["W"]),
        register_kind=kv.get("register", "lww"),
        hinted_handoff=_ONOFF[kv.get("hh", "off")],
        read_repair=_ONOFF[kv.get("rr", "off")],
        failure_mode=kv.get("failures", "none"),
        allow_unsafe=_ONOFF[kv.get("override", "off")],
    )


def _parse_budget(args: list[str]) -> Budget:
    kv = dict(a.split("=", 1) for a in args)
    names = {"steps": "max_steps", "toggles": "max_failure_toggles", "wipes": "max_wipes",
             "losses": "max_losses"}
    out = {names[k]: int(v) for k, v in kv.items() if k in names}
    if "dedup" in kv:
        out["dedup"] = _ONOFF[kv["dedup"]]
    unknown = set(kv) - set(names) - {"dedup"}
    if unknown:
        raise ValueError(f"unknown budget fields {sorted(unknown)}")
    return Budget(**out)


def parse_scenario(text: str, name: str | None = None) -> Scenario:
    keys: list[str] = []
    config: Config | None = None
    budget: Budget | None = None
    script: list[Directive] = []
    checks: list[Check] = []
    taint: int | None = None
    lines: dict[int, int] = {}

    def key_id(tok: str) -> int:
        if tok not in keys:
            keys.append(tok)
        return keys.index(tok)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *args = line.split()
        try:
            if config is None:
                if word != "config":
                    raise ValueError("first line must be a config line")
                config = _parse_config(args)
                continue
            if word == "budget":
                budget = _parse_budget(args)
            elif word == "put":
                if len(args) < 2:
                    raise ValueError("put needs a key and a value")
                opts = dict(a.split("=", 1) for a in args[2:])
                if set(opts) - {"expect", "coord"}:
                    raise ValueError(f"unknown put options {sorted(opts)}")
                coord = int(opts["coord"]) if "coord" in opts else None
                lines[len(script)] = lineno
                script.append(Put(key_id(args[0]), int(args[1]), opts.get("expect", "any"), coord))
            elif word in ("get", "fail", "recover", "destroy"):
                (arg,) = args
                lines[len(script)] = lineno
                if word == "get":
                    script.append(Get(key_id(arg)))
                elif word == "fail":
                    script.append(Fail(int(arg)))
                elif word == "recover":
                    script.append(Recover(int(arg)))
                else:
                    script.append(DestroyHints(int(arg)))
            elif word == "wipe":
                r, k = args
                lines[len(script)] = lineno
                script.append(Wipe(int(r), key_id(k)))
            elif word == "taint":
                (arg,) = args
                if taint is not None:
                    raise ValueError("taint may appear at most once")
                taint = int(arg)
                lines[-1] = lineno
            elif word == "quiesce":
                lines[len(script)] = lineno
                if args == ["delivery"]:
                    script.append(Quiesce("delivery"))
                elif len(args) == 2 and args[0] == "converge":
                    script.append(Quiesce("converge", key_id(args[1])))
                else:
                    raise ValueError("expected 'quiesce delivery' or 'quiesce converge KEY'")
            elif word == "check":
                kind, *rest = args
                lines[-(len(checks) + 2)] = lineno
                if kind == "exists-read":
                    checks.append(ExistsRead(tuple(_values(t) for t in rest)))
                elif kind == "forall-no-read":
                    checks.append(ForallNoRead(tuple(_values(t) for t in rest)))
                elif kind == "delivery" and not rest:
                    checks.append(EventualDelivery())
                elif kind in ("converge", "diverge") and len(rest) == 1:
                    k = key_id(rest[0])
                    checks.append(Convergence(k) if kind == "converge" else Divergence(k))
                else:
                    raise ValueError(f"bad check {' '.join(args)!r}")
            else:
                raise ValueError(f"unknown directive {word!r}")
        except (ValueError, KeyError, IndexError, ConfigError) as exc:
            raise ScenarioError(f"line {lineno}: {exc}") from None
    if config is None:
        raise ScenarioError("missing config line")
    sc = Scenario(config, tuple(script), tuple(checks), tuple(keys) or ("k",), taint, budget, name)
    validate(sc, lines)
    return sc


def serialize(sc: Scenario) -> str:
    c = sc.config
    onoff = {True: "on", False: "off"}
    out = []
    if sc.name:
        out.append(f"# {sc.name}")
    cfg = (f"config replicas={c.num_replicas} rf={c.replication_factor} R={c.read_cl} "
           f"W={c.write_cl} register={c.register_kind} hh={onoff[c.hinted_handoff]} "
           f"rr={onoff[c.read_repair]} failures={c.failure_mode}")
    if c.allow_unsafe:
        cfg += " override=on"
    out.append(cfg)
    if sc.budget is not None:
        b = sc.budget
        line = (f"budget steps={b.max_steps} toggles={b.max_failure_toggles} "
                f"wipes={b.max_wipes} losses={b.max_losses}")
        if not b.dedup:
            line += " dedup=off"
        out.append(line)
    k = sc.keys
    nput = 0
    for d in sc.script:
        if isinstance(d, Put):
            line = f"put {k[d.key]} {d.value} expect={d.expect}"
            if d.coord is not None:
                line += f" coord={d.coord}"
            out.append(line)
            nput += 1
            if sc.taint == nput:
                out.append(f"taint {nput}")
        elif isinstance(d, Get):
            out.append(f"get {k[d.key]}")
        elif isinstance(d, Fail):
            out.append(f"fail {d.replica}")
        elif isinstance(d, Recover):
            out.append(f"recover {d.replica}")
        elif isinstance(d, Wipe):
            out.append(f"wipe {d.replica} {k[d.key]}")
        elif isinstance(d, DestroyHints):
            out.append(f"destroy {d.coord}")
        elif isinstance(d, Quiesce):
            out.append("quiesce delivery" if d.mode == "delivery" else f"quiesce converge {k[d.key]}")
    for ch in sc.checks:
        if isinstance(ch, ExistsRead):
            out.append("check exists-read " + " ".join(_fmt_values(v) for v in ch.reads))
        elif isinstance(ch, ForallNoRead):
            out.append("check forall-no-read " + " ".join(_fmt_values(v) for v in ch.reads))
        elif isinstance(ch, EventualDelivery):
            out.append("check delivery")
        elif isinstance(ch, Convergence):
            out.append(f"check converge {k[ch.key]}")
        elif isinstance(ch, Divergence):
            out.append(f"check diverge {k[ch.key]}")
    return "\n".join(out) + "\n"


# -- built-in scenarios ----------------------------------------------------

_BUILTINS = {
    "s1": """\
config replicas=3 rf=3 R=1 W=2 register=lww hh=off rr=off failures=none
put k 0 expect=ok
put k 1 expect=fail
get k
check exists-read 1
""",
    "s2": """\
config replicas=3 rf=3 R=1 W=2 register=lww hh=off rr=off failures=none
put k 0 expect=ok
put k 1 expect=ok
get k
get k
check exists-read 1 0
""",
    "s3": """\
config replicas=3 rf=3 R=1 W=1 register=lww hh=off rr=off failures=none
put k 0 expect=ok
put k 1 expect=ok
put k 2 expect=ok
put k 3 expect=ok
get k
get k
get k
check forall-no-read 2 1 0
""",
    "s4": """\
config replicas=3 rf=3 R=1 W=2 register=lww hh=on rr=off failures=transient
budget steps=40 toggles=2 wipes=0 losses=0
put k 0 expect=any
put k 1 expect=any
taint 2
quiesce delivery
check delivery
""",
    "fig2": """\
config replicas=3 rf=3 R=1 W=1 register=lww hh=off rr=on failures=permanent
budget steps=40 toggles=0 wipes=0 losses=2
put k 0 expect=ok
put k 1 expect=ok
put k 2 expect=ok
wipe 2 k
fail 2
get k
check diverge k
""",
    "converge": """\
config replicas=3 rf=3 R=1 W=1 register=lww hh=off rr=on failures=permanent
budget steps=60 toggles=0 wipes=1 losses=1
put k 0 expect=any
put k 1 expect=any
quiesce converge k
check converge k
""",
}

# The timeline of the single-read-repair counterexample.  Replicas A, B, C
# are 0, 1, 2; ops 0, 1, 2 carry values 0, 1, 2.
FIG2_SCHEDULE = (
    "script", "deliver:0,0", "deliver:1,0", "deliver:2,0", "put_step:0",
    "script", "deliver:1,1", "deliver:2,1", "lose:0,1", "put_step:1",
    "script", "deliver:2,2", "lose:1,2", "put_step:2",
    "script", "script",  # C loses its store and crashes
    "script", "read_ls:3,0", "read_ls:3,1", "get_step:3,1",
    "repair:3",  # pushes value 1 to A as rrw_A(1)
    "deliver:0,2",  # the delayed w_A(2) overtakes the repair write
    "deliver:0,1",  # rrw_A(1) arrives and loses to the newer stamp
)

BUILTIN_SCHEDULES = {"fig2": FIG2_SCHEDULE}


def builtin_names() -> list[str]:
    return list(_BUILTINS)


def builtin(name: str) -> Scenario:
    try:
        text = _BUILTINS[name]
    except KeyError:
        raise ScenarioError(f"unknown builtin {name!r}; known: {', '.join(_BUILTINS)}") from None
    return parse_scenario(text, name=name)
