"""Historical replay: turn a past incident into a one-event scenario."""
from __future__ import annotations

from typing import Sequence

from ..errors import GenerationError
from ..kgraph import IncidentRecord, Kind, canonical_target
from ..scenario import EventType, FailureEvent, Scenario, Severity
from .context import GeneratorContext
from .rules import infer_class, self_check

# kinds to remap to, in order of preference
_REMAP_KINDS = {
    EventType.FIBER_LINK_FAILURE: (Kind.LINK,),
    EventType.ROUTER_OVERLOAD: (Kind.ROUTER,),
    EventType.NODE_FAILURE: (Kind.ROUTER,),
    EventType.TRAFFIC_SPIKE: (Kind.FLOW, Kind.ROUTER),
    EventType.CASCADING_TRIP: (Kind.LINK, Kind.ROUTER),
}


def propose_replay(incident_log: Sequence[IncidentRecord], ctx: GeneratorContext) -> Scenario:
    if not incident_log:
        raise GenerationError("incident log is empty")
    idx = ctx.seed % len(incident_log)
    rec = incident_log[idx]
    try:
        etype = EventType(rec.event_type)
        sev = Severity(rec.severity)
    except ValueError as exc:
        raise GenerationError(f"incident {idx}: {exc}") from None
    kg = ctx.subgraph
    target = rec.target
    if etype in (EventType.FIBER_LINK_FAILURE, EventType.CASCADING_TRIP):
        target = canonical_target(target)
    meta = {"generator": "replay", "incident": idx, "seed": ctx.seed}
    wanted = _REMAP_KINDS[etype]
    if target not in kg or kg.kind_of(target) not in wanted:
        new = None
        for kind in wanted:
            ids = kg.ids(kind)
            if ids:
                new = min(ids)
                break
        if new is None:
            raise GenerationError(f"incident {idx}: no {'/'.join(k.value for k in wanted)} to remap {target!r} to")
        meta["remap"] = f"{target} -> {new}"
        target = new
    ev = FailureEvent(etype, target, 0.0, sev)
    meta["class"] = infer_class([ev]).value
    s = Scenario(f"replay-{idx}-{ctx.seed}", [ev], meta)
    self_check(s, ctx)
    return s
