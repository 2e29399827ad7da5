"""Template-based scenario generation (one template per scenario class)."""
from __future__ import annotations

import random
from typing import Callable, Sequence

from ..errors import GenerationError
from ..kgraph import Kind, KnowledgeGraph, dependency_closure
from ..scenario import (EventType, FailureEvent, Scenario, ScenarioClass, Severity, fails_component,
                        validate)
from .context import Constraints, FeedbackExemplar, GeneratorContext

BOOST = 1.5
CLASS_ORDER = (ScenarioClass.FIBER, ScenarioClass.OVERLOAD, ScenarioClass.CASCADE, ScenarioClass.DDOS)
SEVERITIES = (Severity.LOW, Severity.MEDIUM, Severity.HIGH)
FIBER_SEVERITY_W = (0.2, 0.3, 0.5)
OVERLOAD_SEVERITY_W = (0.2, 0.3, 0.5)
SPIKE_SEVERITY_W = (0.3, 0.4, 0.3)
SPIKE_MULTIPLIER = {Severity.LOW: 2.0, Severity.MEDIUM: 5.0, Severity.HIGH: 10.0}
MAX_FOLLOW_UPS = 6


def class_weights(feedback: Sequence[FeedbackExemplar]) -> dict[ScenarioClass, float]:
    """Uniform class weights; each class seen among the exemplars gets x1.5; normalised."""
    w = {c: 1.0 for c in CLASS_ORDER}
    seen = set()
    for ex in feedback:
        try:
            seen.add(ScenarioClass(ex.scenario_class))
        except ValueError:
            pass
    for c in seen:
        w[c] *= BOOST
    total = sum(w.values())
    return {c: v / total for c, v in w.items()}


def infer_class(events: Sequence[FailureEvent]) -> ScenarioClass:
    if any(e.cause is not None for e in events) or sum(fails_component(e) for e in events) > 1:
        return ScenarioClass.CASCADE
    kinds = {e.event_type for e in events}
    if EventType.TRAFFIC_SPIKE in kinds:
        return ScenarioClass.DDOS
    if EventType.ROUTER_OVERLOAD in kinds:
        return ScenarioClass.OVERLOAD
    return ScenarioClass.FIBER


def _start_time(rng: random.Random, c: Constraints) -> float:
    return round(rng.uniform(0.0, min(c.horizon_s * 0.25, 600.0)), 1)


def _severity(rng: random.Random, weights: Sequence[float]) -> Severity:
    return rng.choices(SEVERITIES, weights=weights)[0]


def _fiber(kg: KnowledgeGraph, rng: random.Random, c: Constraints) -> list[FailureEvent]:
    links = kg.links
    if not links:
        raise GenerationError("fiber class needs at least one link")
    return [FailureEvent(EventType.FIBER_LINK_FAILURE, rng.choice(links), _start_time(rng, c),
                         _severity(rng, FIBER_SEVERITY_W))]


def _overload(kg: KnowledgeGraph, rng: random.Random, c: Constraints) -> list[FailureEvent]:
    routers = kg.routers
    if not routers:
        raise GenerationError("overload class needs at least one router")
    return [FailureEvent(EventType.ROUTER_OVERLOAD, rng.choice(routers), _start_time(rng, c),
                         _severity(rng, OVERLOAD_SEVERITY_W))]


def _ddos(kg: KnowledgeGraph, rng: random.Random, c: Constraints) -> list[FailureEvent]:
    pool = kg.flows or kg.routers
    if not pool:
        raise GenerationError("ddos class needs flows or routers")
    n = min(rng.randint(1, 3), len(pool), c.max_events)
    t = _start_time(rng, c)
    out = []
    for target in sorted(rng.sample(pool, n)):
        sev = _severity(rng, SPIKE_SEVERITY_W)
        out.append(FailureEvent(EventType.TRAFFIC_SPIKE, target, t, sev,
                                params={"spike_multiplier": SPIKE_MULTIPLIER[sev]}))
    return out


def _event_for(kg: KnowledgeGraph, target: str, t: float, rng: random.Random,
               cause: int | None) -> FailureEvent:
    kind = kg.kind_of(target)
    if kind is Kind.LINK:
        return FailureEvent(EventType.CASCADING_TRIP, target, t, Severity.HIGH, cause)
    if kind is Kind.ROUTER:
        # node failures end a chain early (their links count as failed), so favour overloads
        if rng.random() < 0.3:
            return FailureEvent(EventType.NODE_FAILURE, target, t, Severity.HIGH, cause)
        return FailureEvent(EventType.ROUTER_OVERLOAD, target, t, _severity(rng, OVERLOAD_SEVERITY_W), cause)
    sev = _severity(rng, SPIKE_SEVERITY_W)
    return FailureEvent(EventType.TRAFFIC_SPIKE, target, t, sev, cause, {"spike_multiplier": SPIKE_MULTIPLIER[sev]})


_TARGETABLE = (Kind.LINK, Kind.ROUTER, Kind.FLOW)


class _FailedSet:
    """Components already failed by earlier events (mirrors rule C4)."""

    def __init__(self, kg: KnowledgeGraph):
        self.kg = kg
        self.ids: set[str] = set()

    def add(self, ev: FailureEvent) -> None:
        if fails_component(ev):
            self.ids.add(ev.target)
            if self.kg.kind_of(ev.target) is Kind.ROUTER:
                self.ids.update(self.kg.router_links.get(ev.target, ()))


def _has_follow_up(kg: KnowledgeGraph, seed: str) -> bool:
    failed = {seed}
    if kg.kind_of(seed) is Kind.ROUTER:
        failed.update(kg.router_links.get(seed, ()))
    return any(x not in failed and kg.kind_of(x) in _TARGETABLE for x in dependency_closure(kg, seed))


def _cascade(kg: KnowledgeGraph, rng: random.Random, c: Constraints) -> list[FailureEvent]:
    if c.max_events < 2:
        raise GenerationError("a cascade needs at least 2 events")
    links, routers = kg.links, kg.routers
    if not links and not routers:
        raise GenerationError("cascade class needs links or routers")
    if c.causal:
        # only seeds with something left to propagate to can start a chain
        links, routers = [x for x in links if _has_follow_up(kg, x)], [x for x in routers if _has_follow_up(kg, x)]
        if not links and not routers:
            raise GenerationError("no component depends on any cascade seed; closures are empty")
    t = _start_time(rng, c)
    if links and (not routers or rng.random() < 0.7):
        seed = FailureEvent(EventType.FIBER_LINK_FAILURE, rng.choice(links), t, Severity.HIGH)
    else:
        seed = FailureEvent(EventType.NODE_FAILURE, rng.choice(routers), t, Severity.HIGH)
    events = [seed]
    failed = _FailedSet(kg)
    failed.add(seed)
    used = {seed.target}
    n_follow = rng.randint(min(2, c.max_events - 1), min(c.max_events - 1, MAX_FOLLOW_UPS))
    pool = sorted(cid for cid, comp in kg.components.items() if comp.kind in _TARGETABLE)
    for _ in range(n_follow):
        t = round(min(c.horizon_s, t + rng.uniform(1.0, 30.0)), 1)
        if c.causal:
            pick = None
            # extend the deepest chain first: latest event whose closure still has room
            for ci in range(len(events) - 1, -1, -1):
                cands = sorted(x for x in dependency_closure(kg, events[ci].target)
                               if x not in used and x not in failed.ids
                               and kg.kind_of(x) in _TARGETABLE)
                # links and routers can propagate further than flows
                infra = [x for x in cands if kg.kind_of(x) is not Kind.FLOW]
                cands = infra or cands
                if cands:
                    pick = (ci, rng.choice(cands))
                    break
            if pick is None:
                break
            ev = _event_for(kg, pick[1], t, rng, pick[0])
        else:
            cands = [x for x in pool if x not in used and x not in failed.ids]
            if not cands:
                break
            ev = _event_for(kg, rng.choice(cands), t, rng, None)
        events.append(ev)
        used.add(ev.target)
        failed.add(ev)
    if len(events) < 2:
        raise GenerationError("no component depends on the cascade seed; closures are empty")
    return events


TEMPLATES: dict[ScenarioClass, Callable[[KnowledgeGraph, random.Random, Constraints], list[FailureEvent]]] = {
    ScenarioClass.FIBER: _fiber,
    ScenarioClass.OVERLOAD: _overload,
    ScenarioClass.CASCADE: _cascade,
    ScenarioClass.DDOS: _ddos,
}


def choose_class(ctx: GeneratorContext, rng: random.Random) -> ScenarioClass:
    if ctx.constraints.scenario_class is not None:
        return ctx.constraints.scenario_class
    w = class_weights(ctx.feedback)
    cls = rng.choices(CLASS_ORDER, weights=[w[c] for c in CLASS_ORDER])[0]
    if cls is ScenarioClass.CASCADE and not _cascade_feasible(ctx.subgraph, ctx.constraints):
        rest = [c for c in CLASS_ORDER if c is not ScenarioClass.CASCADE]
        cls = rng.choices(rest, weights=[w[c] for c in rest])[0]
    return cls


def _cascade_feasible(kg: KnowledgeGraph, c: Constraints) -> bool:
    if c.max_events < 2:
        return False
    seeds = kg.links + kg.routers
    if c.causal:
        return any(_has_follow_up(kg, x) for x in seeds)
    return bool(seeds) and sum(1 for comp in kg.components.values() if comp.kind in _TARGETABLE) >= 2


def propose_rule_based(ctx: GeneratorContext) -> Scenario:
    """Sample one scenario from the class template; a pure function of ``ctx``."""
    kg = ctx.subgraph
    if not kg.components:
        raise GenerationError("empty subgraph")
    rng = random.Random(ctx.seed)
    cls = choose_class(ctx, rng)
    events = TEMPLATES[cls](kg, rng, ctx.constraints)
    s = Scenario(f"rule-{cls.value}-{ctx.seed}", events,
                 {"generator": "rule", "class": cls.value, "seed": ctx.seed})
    self_check(s, ctx)
    return s


def self_check(s: Scenario, ctx: GeneratorContext) -> None:
    c = ctx.constraints
    report = validate(s, ctx.subgraph, horizon_s=c.horizon_s, max_events=c.max_events, causal=c.causal)
    if not report.valid:
        first = report.violations[0]
        raise GenerationError(f"generated scenario failed {first.rule}: {first.message}")
