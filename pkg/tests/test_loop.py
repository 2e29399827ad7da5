import random

import numpy as np
import pytest

from resiloop.errors import CampaignError, ConfigurationError
from resiloop.generator import ScriptedClient
from resiloop.kgraph import IncidentRecord, with_incidents
from resiloop.loop import (VARIANTS, Ablations, AblationReport, FeedbackStore, IterationRecord, LoopConfig,
                           impact_score, iteration_seed, run_ablation_suite, run_campaign)
from resiloop.scenario import EventType, FailureEvent, Scenario, Severity, validate
from resiloop.testbeds import chain, deep_dependency, fiber_cut_triangle
from resiloop.twin import KPI_COLUMNS, ACCOUNTING_COLUMNS, KpiSample, KpiSeries, SimulationConfig, SimulationResult

SIM = SimulationConfig(horizon_s=120.0)


def fake_result(latency=1.0, loss=0.0, impacted=0.0, depth=0, base_latency=1.0, routers=4):
    t = np.arange(0.0, 11.0)
    cols = {c: np.zeros(len(t)) for c in KPI_COLUMNS + ACCOUNTING_COLUMNS}
    before = t < 5
    cols["mean_latency_ms"][:] = np.where(before, base_latency, latency)
    cols["loss_fraction"][:] = np.where(before, 0.0, loss)
    cols["impacted_nodes"][:] = np.where(before, 0.0, impacted)
    base = KpiSample(0.0, base_latency, base_latency, 0.0, 0.0, 0.0, 0.0)
    return SimulationResult(KpiSeries(t, cols), base, [], 0, {}, depth, {}, {}, [], routers, 5.0)


def test_impact_zero():
    assert impact_score(fake_result()) == 0.0


def test_impact_blackout():
    r = fake_result(latency=1000.0, loss=1.0, impacted=4, depth=6)
    assert impact_score(r) == 1.0


def test_impact_arithmetic():
    r = fake_result(loss=0.5, impacted=2)
    assert impact_score(r) == pytest.approx(0.25)


def test_impact_latency_term():
    # +2x baseline latency against a 4x scale: half the term
    r = fake_result(latency=3.0)
    assert impact_score(r, weights=(1, 0, 0, 0)) == pytest.approx(0.5)


def test_loop_config_checks():
    with pytest.raises(ConfigurationError):
        LoopConfig(iterations=0)
    with pytest.raises(ConfigurationError):
        LoopConfig(weights=(0.5, 0.5, 0.5, 0.5))
    with pytest.raises(ConfigurationError):
        LoopConfig(generator="magic")
    with pytest.raises(ConfigurationError):
        Ablations.from_names(["kg", "gravity"])
    assert Ablations.from_names(["causal"]).label == "no_causal"


def test_iteration_seed_stable():
    assert iteration_seed(0, 1, 1) == iteration_seed(0, 1, 1)
    assert iteration_seed(0, 1, 1) != iteration_seed(0, 2, 1)
    assert 0 <= iteration_seed(7, 3, 2) < 2 ** 64


def test_single_iteration_fiber_chain():
    kg = chain(3)
    from resiloop.kgraph import build_service_layer
    kg = build_service_layer(kg, {"flows": [{"id": "F1", "src": "A", "dst": "C", "demand_mbps": 100}]})
    rep = run_campaign(LoopConfig(iterations=1, scenario_class="fiber", sim=SIM), kg)
    assert len(rep.records) == 1
    assert rep.validity_rate == 1.0
    assert rep.records[0].scenario.events[0].event_type is EventType.FIBER_LINK_FAILURE


def _store_max_trace(records, k):
    store, out = FeedbackStore(k), []
    for r in records:
        store.insert(r)
        out.append(store.max_impact)
    return out


@pytest.mark.parametrize("seed", range(4))
def test_running_max_non_decreasing(seed):
    kg, tm = deep_dependency()
    rep = run_campaign(LoopConfig(iterations=10, seed=seed, sim=SIM), kg, tm)
    raw = [r.impact for r in rep.records]
    trace = _store_max_trace(rep.records, 5)
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    assert trace == [max(raw[: i + 1]) for i in range(len(raw))]
    assert rep.running_max == trace


def test_every_record_valid():
    kg, tm = deep_dependency()
    rep = run_campaign(LoopConfig(iterations=8, seed=3, sim=SIM), kg, tm)
    for r in rep.records:
        if not r.skipped:
            assert validate(r.scenario, kg).valid
            assert r.validation.valid
            assert 0.0 <= r.impact <= 1.0


def test_campaign_deterministic():
    kg, tm = deep_dependency()
    cfg = LoopConfig(iterations=6, seed=11, sim=SIM)
    a, b = run_campaign(cfg, kg, tm), run_campaign(cfg, kg, tm)
    assert a.iterations_csv() == b.iterations_csv()
    assert a.to_json() == b.to_json()


def test_campaign_with_scripted_llm_deterministic():
    kg, tm = fiber_cut_triangle()
    reply = '{"id": "x", "events": [{"event_type": "fiber_link_failure", "target": "A-C", "timestamp": 20, "severity": "high"}]}'
    cfg = LoopConfig(iterations=3, generator="llm", sim=SIM)
    a = run_campaign(cfg, kg, tm, client=ScriptedClient([reply] * 3))
    b = run_campaign(cfg, kg, tm, client=ScriptedClient([reply] * 3))
    assert a.iterations_csv() == b.iterations_csv()
    assert all(r.scenario.meta["generator"] == "llm" for r in a.records)


def test_feedback_store_elitist():
    store = FeedbackStore(2)
    s = Scenario("s", [FailureEvent(EventType.NODE_FAILURE, "A", 0, Severity.HIGH)], {"class": "fiber"})
    for i, imp in enumerate([0.2, 0.5, 0.5, 0.1, 0.9], 1):
        store.insert(IterationRecord(i, 0, 1, s, impact=imp))
    assert [(r.iteration, r.impact) for r in store.records] == [(5, 0.9), (2, 0.5)]
    store.insert(IterationRecord(6, 0, 4))  # skipped iterations never enter
    assert len(store) == 2


def test_replay_campaign_skips_nothing():
    kg, tm = fiber_cut_triangle()
    kg = with_incidents(kg, [IncidentRecord("fiber_link_failure", "A-C"), IncidentRecord("node_failure", "B")])
    rep = run_campaign(LoopConfig(iterations=4, generator="replay", sim=SIM), kg, tm)
    assert rep.validity_rate == 1.0
    assert {r.scenario.events[0].target for r in rep.records} == {"A-C", "B"}


def test_campaign_error_when_nothing_generates():
    kg, tm = fiber_cut_triangle()
    with pytest.raises(CampaignError):
        run_campaign(LoopConfig(iterations=2, generator="replay", sim=SIM), kg, tm, incidents=[])


def test_ablation_bookkeeping():
    kg, tm = deep_dependency()
    rep = run_ablation_suite(LoopConfig(iterations=4, seed=5, sim=SIM), kg, tm)
    assert list(rep.campaigns) == list(VARIANTS)
    assert {c.config.seed for c in rep.campaigns.values()} == {5}
    assert rep.normalized()["full"] == 1.0
    lines = rep.to_csv().splitlines()
    assert len(lines) == 5 and lines[1].startswith("full,5,4,")
    # matched seeds: a record's seed is fixed by (campaign seed, iteration, attempt), whatever the variant
    for c in rep.campaigns.values():
        for r in c.records:
            assert r.seed == iteration_seed(5, r.iteration, r.attempts)


def test_normalized_zero_reference():
    kg, tm = deep_dependency()
    full = run_campaign(LoopConfig(iterations=1, sim=SIM), kg, tm)
    for r in full.records:
        r.impact = 0.0
    rep = AblationReport(0, {"full": full, "no_kg": full})
    assert rep.normalized() == {"full": 1.0, "no_kg": 1.0}
