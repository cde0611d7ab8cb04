from __future__ import annotations

from antientropy.protocol import Action, apply_action, enabled_actions, initial_state
from antientropy.scenarios import parse_scenario


def scenario(body: str, config: str = "config replicas=3 rf=3 R=1 W=1 register=lww hh=off rr=off failures=none",
             budget: str | None = None):
    lines = [config] + ([budget] if budget else []) + [ln.strip() for ln in body.strip().splitlines()]
    return parse_scenario("\n".join(lines) + "\n")


def step(sc, s, text: str, budget=None):
    a = Action.decode(text)
    acts = enabled_actions(s, sc) if budget is None else enabled_actions(s, sc, budget)
    assert a in acts, f"{text} not enabled; have {[x.encode() for x in acts]}"
    return apply_action(s, sc, a)


def run(sc, *texts, budget=None):
    s = initial_state(sc)
    for t in texts:
        s = step(sc, s, t, budget)
    return s


def enabled(sc, s, budget=None) -> list[str]:
    acts = enabled_actions(s, sc) if budget is None else enabled_actions(s, sc, budget)
    return [a.encode() for a in acts]
