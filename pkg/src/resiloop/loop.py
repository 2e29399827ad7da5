"""Closed loop: generate, validate, simulate, mitigate, score, feed back."""
from __future__ import annotations

import csv
import io
import logging
import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from . import mitigate
from .errors import CampaignError, ConfigurationError, GenerationError
from .generator import (BACKENDS, CompletionClient, Constraints, FeedbackExemplar, GeneratorContext,
                        propose)
from .kgraph import IncidentRecord, KnowledgeGraph
from .scenario import (MAX_EVENTS, Scenario, ScenarioClass, ValidationReport, event_digest, scenario_to_json,
                       validate)
from .twin import KpiSample, SimulationConfig, SimulationResult, TrafficMatrix, router_count, run

log = logging.getLogger(__name__)

DEPTH_CAP = 4
LATENCY_SCALE = 4.0
MAX_REGENERATIONS = 3


@dataclass(frozen=True)
class Ablations:
    disable_kg: bool = False
    disable_causal: bool = False
    disable_feedback: bool = False

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "Ablations":
        names = set(names)
        unknown = names - {"kg", "causal", "feedback"}
        if unknown:
            raise ConfigurationError(f"unknown ablation(s): {', '.join(sorted(unknown))}")
        return cls("kg" in names, "causal" in names, "feedback" in names)

    @property
    def label(self) -> str:
        off = [n for n, f in (("kg", self.disable_kg), ("causal", self.disable_causal),
                              ("feedback", self.disable_feedback)) if f]
        return "full" if not off else "no_" + "_no_".join(off)


@dataclass(frozen=True)
class LoopConfig:
    iterations: int = 20
    k: int = 5
    generator: str = "rule"
    ablations: Ablations = field(default_factory=Ablations)
    weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    seed: int = 0
    scenario_class: ScenarioClass | None = None
    max_events: int = MAX_EVENTS
    sim: SimulationConfig = field(default_factory=SimulationConfig)
    mitigation: bool = True

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.generator not in BACKENDS:
            raise ConfigurationError(f"generator must be one of {', '.join(BACKENDS)}")
        w = tuple(float(x) for x in self.weights)
        if len(w) != 4 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ConfigurationError("impact weights must be four non-negative numbers summing to 1")
        object.__setattr__(self, "weights", w)
        if self.scenario_class is not None:
            object.__setattr__(self, "scenario_class", ScenarioClass(self.scenario_class))

    def to_json(self) -> dict:
        return {"iterations": self.iterations, "k": self.k, "generator": self.generator,
                "ablations": {"disable_kg": self.ablations.disable_kg,
                              "disable_causal": self.ablations.disable_causal,
                              "disable_feedback": self.ablations.disable_feedback},
                "weights": list(self.weights), "seed": self.seed,
                "class": self.scenario_class.value if self.scenario_class else None,
                "max_events": self.max_events, "sim": self.sim.to_json(), "mitigation": self.mitigation}


def _clamp01(x: float) -> float:
    return 0.0 if not x > 0 else (1.0 if x > 1 else x)


def impact_score(result: SimulationResult, baseline: KpiSample | None = None,
                 weights: Sequence[float] = (0.25, 0.25, 0.25, 0.25), total_routers: int | None = None) -> float:
    """Weighted latency / loss / impacted-node / cascade-depth degradation in [0, 1].

    KPIs are averaged from the first event onward.
    """
    baseline = baseline or result.baseline
    total = total_routers or result.total_routers
    w = result.samples.window_mean(result.first_event_s)
    if baseline.mean_latency_ms > 0:
        lat = _clamp01((w.mean_latency_ms - baseline.mean_latency_ms) / (LATENCY_SCALE * baseline.mean_latency_ms))
    else:
        lat = 0.0
    terms = (lat, _clamp01(w.loss_fraction), _clamp01(w.impacted_nodes / total) if total else 0.0,
             min(result.cascade_depth / DEPTH_CAP, 1.0))
    return _clamp01(sum(a * b for a, b in zip(weights, terms)))


def iteration_seed(seed: int, iteration: int, attempt: int) -> int:
    """Per-proposal seed; identical across ablation variants."""
    return random.Random(f"{seed}:{iteration}:{attempt}").getrandbits(64)


@dataclass
class IterationRecord:
    iteration: int
    seed: int
    attempts: int
    scenario: Scenario | None = None
    validation: ValidationReport | None = None
    result: SimulationResult | None = None
    best_mitigation: mitigate.MitigationReport | None = None
    impact: float = 0.0
    error: str = ""

    @property
    def skipped(self) -> bool:
        return self.scenario is None

    @property
    def cascade_depth(self) -> int:
        return self.result.cascade_depth if self.result else 0

    @property
    def effectiveness(self) -> float:
        return self.best_mitigation.effectiveness if self.best_mitigation else 0.0

    def digest(self) -> str:
        assert self.scenario is not None
        return (f"class={self.scenario.scenario_class};depth={self.cascade_depth};"
                f"events={event_digest(self.scenario.events[:8])}")

    def to_json(self) -> dict:
        out = {"iteration": self.iteration, "seed": self.seed, "attempts": self.attempts,
               "skipped": self.skipped, "impact": self.impact, "error": self.error}
        if self.scenario is not None:
            out["scenario"] = scenario_to_json(self.scenario)
            out["validation"] = self.validation.to_json() if self.validation else None
            out["cascade_depth"] = self.cascade_depth
            out["induced_events"] = len(self.result.induced_events) if self.result else 0
            out["best_mitigation"] = self.best_mitigation.to_json() if self.best_mitigation else None
        return out


class FeedbackStore:
    """Elitist top-k store: highest impact first, earlier iteration on ties."""

    def __init__(self, k: int = 5):
        self.k = k
        self.records: list[IterationRecord] = []

    def insert(self, rec: IterationRecord) -> None:
        if rec.skipped:
            return
        self.records.append(rec)
        self.records.sort(key=lambda r: (-r.impact, r.iteration))
        del self.records[self.k:]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def max_impact(self) -> float:
        return self.records[0].impact if self.records else 0.0

    def exemplars(self) -> list[FeedbackExemplar]:
        return [FeedbackExemplar(r.digest(), _clamp01(r.impact), r.scenario.scenario_class)  # type: ignore[union-attr]
                for r in self.records]


@dataclass
class CampaignReport:
    config: LoopConfig
    records: list[IterationRecord]
    variant: str = "full"

    @property
    def valid_records(self) -> list[IterationRecord]:
        return [r for r in self.records if not r.skipped]

    @property
    def validity_rate(self) -> float:
        return len(self.valid_records) / len(self.records) if self.records else 0.0

    def _mean(self, values: list[float]) -> float:
        return sum(values) / len(values) if values else 0.0

    @property
    def mean_impact(self) -> float:
        return self._mean([r.impact for r in self.valid_records])

    @property
    def max_impact(self) -> float:
        return max((r.impact for r in self.valid_records), default=0.0)

    @property
    def mean_cascade_depth(self) -> float:
        return self._mean([float(r.cascade_depth) for r in self.valid_records])

    @property
    def mean_effectiveness(self) -> float:
        return self._mean([r.effectiveness for r in self.valid_records if r.best_mitigation])

    @property
    def running_max(self) -> list[float]:
        out, best = [], 0.0
        for r in self.records:
            best = max(best, r.impact)
            out.append(best)
        return out

    def summary(self) -> dict:
        return {"variant": self.variant, "seed": self.config.seed, "iterations": len(self.records),
                "validity_rate": self.validity_rate, "mean_impact": self.mean_impact,
                "max_impact": self.max_impact, "mean_cascade_depth": self.mean_cascade_depth,
                "mean_effectiveness": self.mean_effectiveness}

    def to_json(self) -> dict:
        return {"config": self.config.to_json(), "summary": self.summary(),
                "iterations": [r.to_json() for r in self.records]}

    ITERATION_HEADER = ("iteration", "seed", "skipped", "scenario_id", "class", "n_events", "verdict",
                        "impact", "running_max_impact", "cascade_depth", "induced_events", "best_plan",
                        "effectiveness", "attempts")

    def iterations_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.ITERATION_HEADER)
        for r, rmax in zip(self.records, self.running_max):
            s = r.scenario
            w.writerow([r.iteration, r.seed, int(r.skipped), s.id if s else "", (s.scenario_class or "") if s else "",
                        len(s.events) if s else 0, r.validation.verdict if r.validation else "",
                        repr(r.impact), repr(rmax), r.cascade_depth,
                        len(r.result.induced_events) if r.result else 0,
                        r.best_mitigation.plan.name if r.best_mitigation else "", repr(r.effectiveness), r.attempts])
        return buf.getvalue()

    def plot_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("iteration", "impact", "cascade_depth", "effectiveness"))
        for r in self.records:
            w.writerow([r.iteration, repr(r.impact), r.cascade_depth, repr(r.effectiveness)])
        return buf.getvalue()


def run_campaign(cfg: LoopConfig, kg: KnowledgeGraph, traffic: TrafficMatrix | None = None, *,
                 incidents: Sequence[IncidentRecord] | None = None,
                 client: CompletionClient | None = None) -> CampaignReport:
    traffic = traffic if traffic is not None else TrafficMatrix.from_kg(kg)
    traffic.check_against(kg)
    ab = cfg.ablations
    gen_kg = kg.id_only() if ab.disable_kg else kg
    causal = not ab.disable_causal
    incidents = list(kg.incidents if incidents is None else incidents)
    constraints = Constraints(cfg.scenario_class, cfg.max_events, cfg.sim.horizon_s, causal)
    store = FeedbackStore(cfg.k)
    total = router_count(kg)
    records: list[IterationRecord] = []
    for i in range(1, cfg.iterations + 1):
        feedback = [] if ab.disable_feedback else store.exemplars()
        scenario = report = None
        errors = []
        attempt = 0
        seed = 0
        for attempt in range(1, MAX_REGENERATIONS + 2):
            seed = iteration_seed(cfg.seed, i, attempt)
            ctx = GeneratorContext(gen_kg, constraints, feedback, seed, cfg.k)
            try:
                candidate = propose(cfg.generator, ctx, incidents=incidents, client=client)
            except GenerationError as exc:
                errors.append(str(exc))
                continue
            rep = validate(candidate, gen_kg, horizon_s=cfg.sim.horizon_s, max_events=cfg.max_events, causal=causal)
            if rep.valid:
                scenario, report = candidate, rep
                break
            errors.append("; ".join(v.message for v in rep.violations))
        if scenario is None:
            log.info("iteration %d skipped: %s", i, " | ".join(errors))
            records.append(IterationRecord(i, seed, attempt, error=" | ".join(errors)))
            continue
        scenario.meta["iteration"] = i
        result = run(scenario, kg, traffic, cfg.sim)
        best = None
        if cfg.mitigation:
            best = mitigate.best_report(mitigate.evaluate(scenario, kg, traffic, cfg.sim, result))
        rec = IterationRecord(i, seed, attempt, scenario, report, result, best,
                              impact_score(result, result.baseline, cfg.weights, total))
        records.append(rec)
        store.insert(rec)
    if all(r.skipped for r in records):
        raise CampaignError("the generator produced no usable scenario in any iteration")
    return CampaignReport(cfg, records, ab.label)


VARIANTS = {
    "full": Ablations(),
    "no_kg": Ablations(disable_kg=True),
    "no_causal": Ablations(disable_causal=True),
    "no_feedback": Ablations(disable_feedback=True),
}


@dataclass
class AblationReport:
    seed: int
    campaigns: dict[str, CampaignReport]

    def normalized(self) -> dict[str, float]:
        ref = self.campaigns["full"].mean_impact
        out = {}
        for name, c in self.campaigns.items():
            if name == "full":
                out[name] = 1.0
            else:
                out[name] = c.mean_impact / ref if ref > 0 else (1.0 if c.mean_impact == 0 else math.inf)
        return out

    HEADER = ("variant", "seed", "iterations", "mean_impact", "normalized_score", "mean_cascade_depth",
              "validity_rate", "mean_effectiveness")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        norm = self.normalized()
        for name, c in self.campaigns.items():
            w.writerow([name, c.config.seed, len(c.records), repr(c.mean_impact), repr(norm[name]),
                        repr(c.mean_cascade_depth), repr(c.validity_rate), repr(c.mean_effectiveness)])
        return buf.getvalue()

    def to_json(self) -> dict:
        norm = self.normalized()
        return {"seed": self.seed,
                "variants": {n: {**c.summary(), "normalized_score": norm[n]} for n, c in self.campaigns.items()},
                "campaigns": {n: c.to_json() for n, c in self.campaigns.items()}}


def run_ablation_suite(cfg: LoopConfig, kg: KnowledgeGraph, traffic: TrafficMatrix | None = None, *,
                       incidents: Sequence[IncidentRecord] | None = None,
                       client_factory=None) -> AblationReport:
    """Four matched-seed campaigns: full, no_kg, no_causal, no_feedback."""
    out = {}
    for name, ab in VARIANTS.items():
        client = client_factory() if client_factory else None
        out[name] = run_campaign(replace(cfg, ablations=ab), kg, traffic, incidents=incidents, client=client)
    return AblationReport(cfg.seed, out)
