"""Recovery actions, candidate plans, and their evaluation by re-simulation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

from .errors import ConfigurationError
from .kgraph import KnowledgeGraph
from .scenario import EventType, Scenario
from .twin import KpiSample, SimulationConfig, SimulationResult, TrafficMatrix, run

EPS = 1e-9
MAX_PLANS = 6
MAX_BOOST = 4.0


@dataclass(frozen=True)
class Reroute:
    avoid: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "avoid", frozenset(self.avoid))

    def apply(self, runner: Any) -> None:
        runner.avoid(sorted(self.avoid))

    def to_json(self) -> dict:
        return {"action": "reroute", "avoid": sorted(self.avoid)}


@dataclass(frozen=True)
class CapacityBoost:
    target: str
    factor: float = 1.5

    def __post_init__(self) -> None:
        if not 1.0 < self.factor <= MAX_BOOST:
            raise ConfigurationError(f"boost factor must be in (1, {MAX_BOOST}]")

    def apply(self, runner: Any) -> None:
        runner.boost(self.target, self.factor)

    def to_json(self) -> dict:
        return {"action": "capacity_boost", "target": self.target, "factor": self.factor}


@dataclass(frozen=True)
class LoadShed:
    keep_priority: int  # flows with a larger priority number are dropped

    def __post_init__(self) -> None:
        if self.keep_priority not in (1, 2, 3):
            raise ConfigurationError("keep_priority must be 1, 2 or 3")

    def apply(self, runner: Any) -> None:
        runner.shed(self.keep_priority)

    def to_json(self) -> dict:
        return {"action": "load_shed", "keep_priority": self.keep_priority}


@dataclass(frozen=True)
class Rollback:
    events: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(sorted(set(self.events))))
        if any(i < 0 for i in self.events):
            raise ConfigurationError("rollback indices must be non-negative")

    def apply(self, runner: Any) -> None:
        runner.rollback(self.events)

    def to_json(self) -> dict:
        return {"action": "rollback", "events": list(self.events)}


MitigationAction = Union[Reroute, CapacityBoost, LoadShed, Rollback]


def action_from_json(doc: dict) -> MitigationAction:
    kind = doc.get("action")
    if kind == "reroute":
        return Reroute(frozenset(doc.get("avoid", ())))
    if kind == "capacity_boost":
        return CapacityBoost(doc["target"], float(doc.get("factor", 1.5)))
    if kind == "load_shed":
        return LoadShed(int(doc["keep_priority"]))
    if kind == "rollback":
        return Rollback(tuple(doc.get("events", ())))
    raise ConfigurationError(f"unknown mitigation action {kind!r}")


@dataclass(frozen=True)
class MitigationPlan:
    actions: tuple[MitigationAction, ...]
    trigger_s: float
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.name:
            object.__setattr__(self, "name", "+".join(a.to_json()["action"] for a in self.actions) or "noop")

    def apply(self, runner: Any) -> None:
        for a in self.actions:
            a.apply(runner)

    def to_json(self) -> dict:
        return {"name": self.name, "trigger_s": self.trigger_s, "actions": [a.to_json() for a in self.actions]}

    @classmethod
    def from_json(cls, doc: dict) -> "MitigationPlan":
        return cls(tuple(action_from_json(a) for a in doc.get("actions", ())), float(doc["trigger_s"]),
                   str(doc.get("name", "")))


_METRICS = ("loss_fraction", "latency_degradation_ms", "impacted_nodes")


def _metric_values(s: KpiSample, baseline: KpiSample) -> tuple[float, float, float]:
    return (s.loss_fraction, max(0.0, s.mean_latency_ms - baseline.mean_latency_ms), s.impacted_nodes)


def effectiveness(pre: KpiSample, post: KpiSample, baseline: KpiSample, eps: float = EPS) -> float:
    """Mean clamped relative improvement over the metrics that were degraded.

    Metrics with no degradation before mitigation (``pre <= eps``) have
    nothing to improve and are left out; with none left the score is 0.
    """
    terms = []
    for a, b in zip(_metric_values(pre, baseline), _metric_values(post, baseline)):
        if a > eps:
            terms.append(min(1.0, max(0.0, (a - b) / max(a, eps))))
    return sum(terms) / len(terms) if terms else 0.0


@dataclass
class MitigationReport:
    plan: MitigationPlan
    pre: KpiSample  # unmitigated, averaged from the trigger onward
    post: KpiSample
    baseline: KpiSample
    effectiveness: float
    pre_final: KpiSample
    post_final: KpiSample
    post_result: SimulationResult = field(repr=False, default=None)  # type: ignore[assignment]

    def to_json(self) -> dict:
        return {"plan": self.plan.to_json(), "effectiveness": self.effectiveness,
                "baseline": self.baseline.to_json(), "pre": self.pre.to_json(), "post": self.post.to_json(),
                "pre_final": self.pre_final.to_json(), "post_final": self.post_final.to_json()}


def has_impact(result: SimulationResult) -> bool:
    """Did anything measurable change after the first event?"""
    if result.induced_events:
        return True
    b = result.baseline
    t = result.samples.t
    mask = t >= result.first_event_s
    cols = result.samples.columns
    if not mask.any():
        return False
    if (cols["loss_fraction"][mask] > EPS).any() or (cols["impacted_nodes"][mask] > 0).any():
        return True
    return bool((abs(cols["mean_latency_ms"][mask] - b.mean_latency_ms) > EPS).any())


def enumerate_candidates(result: SimulationResult, kg: KnowledgeGraph) -> list[MitigationPlan]:
    """Heuristic plans for a finished run, most specific first, at most six."""
    trigger = result.first_event_s
    primary = result.primary_events
    rollback = MitigationPlan((Rollback(tuple(range(len(primary)))),), trigger, "rollback_all")
    if not primary or not has_impact(result):
        return [rollback]
    plans: list[MitigationPlan] = []
    types = {e.event_type for e in primary}
    failed = sorted({e.target for e in result.events
                     if e.event_type in (EventType.FIBER_LINK_FAILURE, EventType.NODE_FAILURE,
                                         EventType.CASCADING_TRIP) and e.target in kg})
    if failed:
        plans.append(MitigationPlan((Reroute(frozenset(failed)),), trigger, "reroute"))
        surviving = {l: u for l, u in result.link_utilization.items() if l not in failed}
        if surviving:
            hot = min(surviving, key=lambda l: (-surviving[l], l))
            if surviving[hot] > 0:
                plans.append(MitigationPlan((CapacityBoost(hot, 1.5),), trigger, f"boost_{hot}"))
    if types & {EventType.ROUTER_OVERLOAD, EventType.TRAFFIC_SPIKE}:
        plans.append(MitigationPlan((LoadShed(2),), trigger, "shed_keep_2"))
        plans.append(MitigationPlan((LoadShed(1),), trigger, "shed_keep_1"))
    plans.append(rollback)
    return plans[:MAX_PLANS]


def apply(plan: MitigationPlan, scenario: Scenario, kg: KnowledgeGraph, traffic: TrafficMatrix | None = None,
          config: SimulationConfig | None = None, pre_result: SimulationResult | None = None) -> MitigationReport:
    """Re-run the twin with ``plan`` injected and compare against the unmitigated run."""
    config = config or SimulationConfig()
    if not scenario.events:
        raise ConfigurationError("scenario has no events")
    first = min(e.timestamp for e in scenario.events)
    if plan.trigger_s < first:
        raise ConfigurationError(f"trigger {plan.trigger_s} precedes the first failure at {first}")
    if plan.trigger_s > config.horizon_s:
        raise ConfigurationError(f"trigger {plan.trigger_s} beyond horizon {config.horizon_s}")
    for a in plan.actions:
        if isinstance(a, Rollback) and any(i >= len(scenario.events) for i in a.events):
            raise ConfigurationError("rollback references a non-scenario event index")
    pre = pre_result if pre_result is not None else run(scenario, kg, traffic, config)
    post = run(scenario, kg, traffic, config, actions=[(plan.trigger_s, plan)] if plan.actions else ())
    pre_w = pre.samples.window_mean(plan.trigger_s)
    post_w = post.samples.window_mean(plan.trigger_s)
    eff = effectiveness(pre_w, post_w, pre.baseline)
    return MitigationReport(plan, pre_w, post_w, pre.baseline, eff, pre.final, post.final, post)


def evaluate(scenario: Scenario, kg: KnowledgeGraph, traffic: TrafficMatrix | None = None,
             config: SimulationConfig | None = None, result: SimulationResult | None = None,
             plans: Sequence[MitigationPlan] | None = None) -> list[MitigationReport]:
    """Enumerate (unless given) and apply every candidate plan."""
    result = result if result is not None else run(scenario, kg, traffic, config)
    plans = enumerate_candidates(result, kg) if plans is None else plans
    return [apply(p, scenario, kg, traffic, config, pre_result=result) for p in plans]


def best_report(reports: Sequence[MitigationReport]) -> MitigationReport | None:
    """Highest effectiveness; earlier (more specific) plans win ties."""
    best = None
    for r in reports:
        if best is None or r.effectiveness > best.effectiveness:
            best = r
    return best


REPORT_CSV_HEADER = ("plan", "trigger_s", "effectiveness", "pre_loss", "post_loss", "pre_latency_ms",
                     "post_latency_ms", "pre_impacted", "post_impacted")


def reports_to_csv(reports: Sequence[MitigationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_CSV_HEADER)
    for r in reports:
        w.writerow([r.plan.name, repr(r.plan.trigger_s), repr(r.effectiveness), repr(r.pre.loss_fraction),
                    repr(r.post.loss_fraction), _num(r.pre.mean_latency_ms), _num(r.post.mean_latency_ms),
                    repr(r.pre.impacted_nodes), repr(r.post.impacted_nodes)])
    return buf.getvalue()


def _num(x: float) -> str:
    return repr(x) if math.isfinite(x) else ""
