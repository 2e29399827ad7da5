"""Failure-event schema and causal-consistency validation.

Rules checked by :func:`validate`:

C1  the target exists and its kind suits the event type
C2  timestamps never decrease
C3  an event with a cause targets something inside the dependency closure
    of the cause's target (and the cause is an earlier event)
C4  no event targets a component already failed by an earlier event
C5  1..max_events events, every timestamp within the horizon
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

from .errors import OrderingError, SchemaError
from .kgraph import Kind, KnowledgeGraph, canonical_target, dependency_closure

MAX_EVENTS = 64
DEFAULT_HORIZON_S = 3600.0


class EventType(str, enum.Enum):
    FIBER_LINK_FAILURE = "fiber_link_failure"
    ROUTER_OVERLOAD = "router_overload"
    NODE_FAILURE = "node_failure"
    TRAFFIC_SPIKE = "traffic_spike"
    CASCADING_TRIP = "cascading_trip"


class Severity(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class ScenarioClass(str, enum.Enum):
    FIBER = "fiber"
    OVERLOAD = "overload"
    CASCADE = "cascade"
    DDOS = "ddos"


ALLOWED_KINDS: dict[EventType, frozenset[Kind]] = {
    EventType.FIBER_LINK_FAILURE: frozenset({Kind.LINK}),
    EventType.ROUTER_OVERLOAD: frozenset({Kind.ROUTER}),
    EventType.NODE_FAILURE: frozenset({Kind.ROUTER}),
    EventType.TRAFFIC_SPIKE: frozenset({Kind.FLOW, Kind.ROUTER}),
    EventType.CASCADING_TRIP: frozenset({Kind.LINK, Kind.ROUTER}),
}

RULES_TEXT = (
    "C1: every event's target must exist in the graph and match the event type: "
    "fiber_link_failure->Link; router_overload and node_failure->Router; "
    "traffic_spike->Flow or Router; cascading_trip->Link or Router.\n"
    "C2: event timestamps must be non-decreasing.\n"
    "C3: an event with a 'cause' must reference an earlier event, and its target must be in "
    "the dependency closure of the cause event's target.\n"
    "C4: never target a component that an earlier event already failed "
    "(fiber_link_failure with severity high, node_failure, cascading_trip; a failed router also fails its attached links).\n"
    "C5: between 1 and the maximum number of events, all timestamps within the horizon."
)

_FIELDS = ("event_type", "target", "timestamp", "severity", "cause", "params")


@dataclass(frozen=True)
class FailureEvent:
    event_type: EventType
    target: str
    timestamp: float
    severity: Severity
    cause: int | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def with_cause(self, cause: int | None) -> "FailureEvent":
        return replace(self, cause=cause)


@dataclass
class Scenario:
    id: str
    events: list[FailureEvent]
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def generator(self) -> str:
        return self.meta.get("generator", "")

    @property
    def scenario_class(self) -> str | None:
        return self.meta.get("class")


@dataclass(frozen=True)
class Violation:
    rule: str
    event_index: int
    message: str

    def to_json(self) -> dict:
        return {"rule": self.rule, "event_index": self.event_index, "message": self.message}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "invalid" if self.violations else "valid"

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "violations": [v.to_json() for v in self.violations],
                "warnings": list(self.warnings)}


# ---------------------------------------------------------------------------
# (de)serialization


def parse_event(document: Mapping[str, Any]) -> FailureEvent:
    if not isinstance(document, Mapping):
        raise SchemaError("<event>", "event must be a JSON object")
    for key in ("event_type", "target", "timestamp", "severity"):
        if key not in document:
            raise SchemaError(key, "required field missing")
    try:
        etype = EventType(document["event_type"])
    except ValueError:
        raise SchemaError("event_type", f"unknown event type {document['event_type']!r}") from None
    target = document["target"]
    if not isinstance(target, str) or not target:
        raise SchemaError("target", "must be a non-empty string")
    ts = document["timestamp"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or not math.isfinite(ts):
        raise SchemaError("timestamp", "must be a finite number")
    if ts < 0:
        raise SchemaError("timestamp", "must be non-negative")
    try:
        sev = Severity(document["severity"])
    except ValueError:
        raise SchemaError("severity", f"must be one of low/medium/high, got {document['severity']!r}") from None
    cause = document.get("cause")
    if cause is not None and (isinstance(cause, bool) or not isinstance(cause, int) or cause < 0):
        raise SchemaError("cause", "must be a non-negative event index")
    params = document.get("params", {})
    if not isinstance(params, Mapping):
        raise SchemaError("params", "must be an object")
    params = dict(params)
    for key, value in document.items():
        if key not in _FIELDS:
            params[key] = value
    if "spike_multiplier" in params:
        m = params["spike_multiplier"]
        if isinstance(m, bool) or not isinstance(m, (int, float)) or not m > 0:
            raise SchemaError("spike_multiplier", "must be a positive number")
    if etype in (EventType.FIBER_LINK_FAILURE, EventType.CASCADING_TRIP):
        target = canonical_target(target)
    return FailureEvent(etype, target, float(ts), sev, cause, params)


def serialize_event(ev: FailureEvent) -> dict:
    out: dict[str, Any] = {
        "event_type": ev.event_type.value,
        "target": ev.target,
        "timestamp": ev.timestamp,
        "severity": ev.severity.value,
    }
    if ev.cause is not None:
        out["cause"] = ev.cause
    if ev.params:
        out["params"] = dict(sorted(ev.params.items()))
    return out


def scenario_to_json(s: Scenario) -> dict:
    return {"id": s.id, "meta": dict(sorted(s.meta.items())), "events": [serialize_event(e) for e in s.events]}


def scenario_from_json(doc: Mapping[str, Any]) -> Scenario:
    if not isinstance(doc, Mapping):
        raise SchemaError("<scenario>", "scenario must be a JSON object")
    events = doc.get("events")
    if not isinstance(events, list):
        raise SchemaError("events", "must be a list of event objects")
    return Scenario(str(doc.get("id", "scenario")), [parse_event(e) for e in events], dict(doc.get("meta", {})))


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_json(s), separators=(",", ":"))


def load_scenarios(text: str) -> list[Scenario]:
    """Read one JSON scenario, a bare event object, or newline-delimited scenarios."""
    text = text.strip()
    if not text:
        return []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return [scenario_from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
    if isinstance(doc, list):
        return [Scenario("scenario", [parse_event(e) for e in doc], {})]
    if isinstance(doc, dict) and "events" not in doc and "event_type" in doc:
        return [Scenario("scenario", [parse_event(doc)], {})]
    return [scenario_from_json(doc)]


# ---------------------------------------------------------------------------
# ordering


def canonicalize(s: Scenario) -> Scenario:
    """Stable sort by timestamp, remapping cause indices to the new positions."""
    n = len(s.events)
    for i, ev in enumerate(s.events):
        if ev.cause is not None and not 0 <= ev.cause < n:
            raise OrderingError(f"event {i}: cause {ev.cause} is not an event index")
        if ev.cause is not None and s.events[ev.cause].timestamp > ev.timestamp:
            raise OrderingError(f"event {i}: cause {ev.cause} happens after its effect")
    order = sorted(range(n), key=lambda i: (s.events[i].timestamp, i))
    pos = {old: new for new, old in enumerate(order)}
    events = []
    for new, old in enumerate(order):
        ev = s.events[old]
        if ev.cause is not None:
            if pos[ev.cause] >= new:
                raise OrderingError(f"event {old}: cause {ev.cause} is not earlier after sorting")
            ev = ev.with_cause(pos[ev.cause])
        events.append(ev)
    return Scenario(s.id, events, dict(s.meta))


# ---------------------------------------------------------------------------
# validation


def fails_component(ev: FailureEvent) -> bool:
    """Does ``ev`` take its target out of service (as opposed to degrading it)?"""
    if ev.event_type in (EventType.NODE_FAILURE, EventType.CASCADING_TRIP):
        return True
    return ev.event_type is EventType.FIBER_LINK_FAILURE and ev.severity is Severity.HIGH


def validate(s: Scenario, kg: KnowledgeGraph, *, horizon_s: float = DEFAULT_HORIZON_S,
             max_events: int = MAX_EVENTS, causal: bool = True) -> ValidationReport:
    """Check C1..C5 and report every violation found.

    ``causal=False`` drops C3 (the "no causal conditioning" ablation).
    Never raises on an invalid scenario.
    """
    report = ValidationReport()
    events = s.events
    if not 1 <= len(events) <= max_events:
        report.violations.append(Violation("C5", -1, f"scenario has {len(events)} events, allowed 1..{max_events}"))
    failed: set[str] = set()
    closures: dict[str, frozenset[str]] = {}
    for i, ev in enumerate(events):
        comp = kg.components.get(ev.target)
        if comp is None:
            report.violations.append(Violation("C1", i, f"target {ev.target!r} does not exist"))
        elif comp.kind not in ALLOWED_KINDS[ev.event_type]:
            report.violations.append(Violation(
                "C1", i, f"{ev.event_type.value} cannot target {comp.kind.value} {ev.target!r}"))
        if i > 0 and ev.timestamp < events[i - 1].timestamp:
            report.violations.append(Violation(
                "C2", i, f"timestamp {ev.timestamp} precedes previous {events[i - 1].timestamp}"))
        if causal and ev.cause is not None:
            msg = _check_cause(events, i, kg, closures)
            if msg:
                report.violations.append(Violation("C3", i, msg))
            elif events[ev.cause].timestamp == ev.timestamp:
                report.warnings.append(f"event {i}: cause {ev.cause} has the same timestamp")
        if ev.target in failed:
            report.violations.append(Violation("C4", i, f"{ev.target!r} already failed by an earlier event"))
        if not 0 <= ev.timestamp <= horizon_s:
            report.violations.append(Violation("C5", i, f"timestamp {ev.timestamp} outside [0, {horizon_s}]"))
        if fails_component(ev):
            failed.add(ev.target)
            if comp is not None and comp.kind is Kind.ROUTER:
                failed.update(kg.router_links.get(ev.target, ()))
    return report


def _check_cause(events: list[FailureEvent], i: int, kg: KnowledgeGraph,
                 closures: dict[str, frozenset[str]]) -> str | None:
    c = events[i].cause
    if not 0 <= c < i:  # type: ignore[operator]
        return f"cause {c} is not an earlier event"
    cause_target = events[c].target  # type: ignore[index]
    if cause_target not in kg:
        return f"cause target {cause_target!r} does not exist"
    if cause_target not in closures:
        closures[cause_target] = dependency_closure(kg, cause_target)
    if events[i].target not in closures[cause_target]:
        return f"{events[i].target!r} is not reachable from cause target {cause_target!r} through dependencies"
    return None


def event_digest(events: Iterable[FailureEvent]) -> str:
    return ";".join(f"{e.event_type.value}@{e.target}" for e in events)
