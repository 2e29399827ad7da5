"""Acceptance suite: one test (or a small group) per numbered criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends with
a PASS/FAIL line for every criterion.
"""
import json
import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest

from resiloop import mitigate
from resiloop.generator import (Constraints, GeneratorContext, ScriptedClient, propose_llm, propose_replay,
                                propose_rule_based)
from resiloop.errors import GenerationError
from resiloop.kgraph import IncidentRecord, build_service_layer, load_topology_file, with_incidents
from resiloop.loop import LoopConfig, run_ablation_suite, run_campaign
from resiloop.mitigate import Reroute
from resiloop.scenario import (EventType, FailureEvent, Scenario, ScenarioClass, Severity, dumps_scenario,
                               load_scenarios, parse_event, serialize_event, validate)
from resiloop.testbeds import (cascade_chain, deep_dependency, fiber_cut_triangle, random_graph, random_traffic,
                               triangle)
from resiloop.twin import SimulationConfig, apply_event, compute_routes, run, NetworkState, TrafficFlow, TrafficMatrix

from builders import random_events, random_kg
from oracles import brute_validate, floyd_warshall

DATA = Path(__file__).parent / "data"
REFERENCE_EVENT = '{"event_type": "fiber_link_failure", "target": "B-C", "timestamp": 245.8, "severity": "high"}'


# -- 1 -----------------------------------------------------------------------

@pytest.mark.criterion(1, "schema fidelity of the reference event")
def test_c1_reference_event():
    t0 = time.perf_counter()
    ev = parse_event(json.loads(REFERENCE_EVENT))
    assert ev == FailureEvent(EventType.FIBER_LINK_FAILURE, "B-C", 245.8, Severity.HIGH)
    kg = triangle()
    assert "B-C" in kg
    s = Scenario("reference", [ev])
    assert validate(s, kg).valid
    tm = TrafficMatrix([TrafficFlow("F1", "B", "C", 500.0)])
    res = run(s, kg, tm, SimulationConfig(horizon_s=300.0))
    assert res.final.loss_fraction == 0.0  # rerouted via A
    assert json.dumps(serialize_event(ev)) == REFERENCE_EVENT
    text = dumps_scenario(s)
    assert dumps_scenario(load_scenarios(text)[0]) == text
    assert time.perf_counter() - t0 < 1.0


# -- 2 -----------------------------------------------------------------------

def _ingest_and_baseline(path):
    t0 = time.perf_counter()
    kg = load_topology_file(str(path))
    tm = random_traffic(kg, 100, random.Random(2), demand=(1.0, 20.0))
    kg = build_service_layer(kg, tm.service_spec())
    res = run(Scenario("baseline", []), kg, tm, SimulationConfig(horizon_s=10.0))
    return kg, res, time.perf_counter() - t0


def _within(got, want):
    return 0.5 * want <= got <= 1.5 * want


@pytest.mark.criterion(2, "topology scale for both zoo-sized graphs")
def test_c2_zoo1_scale():
    kg, res, dt = _ingest_and_baseline(DATA / "TataNld.graphml")
    assert _within(len(kg.routers), 120) and _within(len(kg.links), 180)
    assert res.baseline.loss_fraction >= 0.0
    assert dt < 10.0


def _zoo2_path():
    env = os.environ.get("RESILOOP_TZ2")
    if env:
        return Path(env)
    for name in ("Cogentco.graphml", "Kdl.graphml", "GtsCe.graphml", "Colt.graphml", "UsCarrier.graphml"):
        if (DATA / name).exists():
            return DATA / name
    return None


@pytest.mark.criterion(2, "topology scale for both zoo-sized graphs")
def test_c2_zoo2_scale():
    path = _zoo2_path()
    # no file of this size ships with the package or any mirrored dependency
    assert path is not None, ("no 230/410-class topology file found: set RESILOOP_TZ2 or place e.g. "
                              "Cogentco.graphml in tests/data")
    kg, res, dt = _ingest_and_baseline(path)
    assert _within(len(kg.routers), 230) and _within(len(kg.links), 410)
    assert dt < 10.0


def test_c2_synthetic_scale_supplement():
    """Same workload on a generated graph of the second size class."""
    rng = random.Random(230)
    t0 = time.perf_counter()
    kg = random_graph(230, 181, rng)
    tm = random_traffic(kg, 100, rng, demand=(1.0, 20.0))
    kg = build_service_layer(kg, tm.service_spec())
    run(Scenario("baseline", []), kg, tm, SimulationConfig(horizon_s=10.0))
    assert _within(len(kg.routers), 230) and _within(len(kg.links), 410)
    assert time.perf_counter() - t0 < 10.0


# -- 3 -----------------------------------------------------------------------

@pytest.mark.criterion(3, "validator agrees with brute-force checker")
def test_c3_validator_oracle():
    rng = random.Random(3003)
    kg = random_kg(rng, n_routers=20, extra=12, n_flows=6, n_deps=10)
    assert len(kg.routers) == 20
    bad = 0
    for _ in range(1000):
        evs = random_events(rng, kg, rng.randint(0, 10))
        got = {(v.rule, v.event_index) for v in validate(Scenario("r", evs), kg).violations}
        bad += got != brute_validate(evs, kg)
    assert bad == 0


# -- 4 -----------------------------------------------------------------------

@pytest.mark.criterion(4, "routing agrees with all-pairs shortest paths")
def test_c4_routing_oracle():
    rng = random.Random(4004)
    for _ in range(1000):
        kg = random_graph(10, rng.randint(0, 20), rng)
        pairs = [tuple(rng.sample(kg.routers, 2)) for _ in range(8)]
        st = NetworkState(kg, TrafficMatrix([TrafficFlow(f"F{i}", a, b, 1.0) for i, (a, b) in enumerate(pairs)]),
                          SimulationConfig())
        down = rng.sample(kg.links, rng.randint(0, 2))
        for i, lid in enumerate(down):
            st = apply_event(st, FailureEvent(EventType.FIBER_LINK_FAILURE, lid, float(i), Severity.HIGH))
        up = [(*kg.link_endpoints[l], kg[l].attrs["prop_latency_ms"]) for l in kg.links if l not in down]
        dist = floyd_warshall(kg.routers, up)
        routes = compute_routes(kg, st)
        for i, (a, b) in enumerate(pairs):
            path = routes[f"F{i}"]
            if math.isinf(dist[a, b]):
                assert path == []
            else:
                assert sum(kg[l].attrs["prop_latency_ms"] for l in path) == dist[a, b]


# -- 5 -----------------------------------------------------------------------

def _fuzz_corpus(n):
    rng = random.Random(5005)
    classes = [None, *ScenarioClass]
    out = []
    while len(out) < n:
        kg = random_graph(rng.randint(4, 14), rng.randint(0, 12), rng)
        tm = random_traffic(kg, rng.randint(1, 15), rng, demand=(10, 900))
        kg = build_service_layer(kg, tm.service_spec())
        ctx = GeneratorContext(kg, Constraints(rng.choice(classes), rng.randint(1, 8), 120.0),
                               seed=rng.getrandbits(32))
        try:
            s = propose_rule_based(ctx)
        except GenerationError:
            continue
        out.append((kg, tm, s))
    return out


@pytest.mark.criterion(5, "flow conservation and bit-identical reruns")
def test_c5_conservation_and_determinism():
    cfg = SimulationConfig(horizon_s=120.0)
    for kg, tm, s in _fuzz_corpus(200):
        a, b = run(s, kg, tm, cfg), run(s, kg, tm, cfg)
        assert a.dumps() == b.dumps()
        off = a.samples.column("offered_mbps")
        got = a.samples.column("delivered_mbps") + a.samples.column("dropped_mbps")
        assert np.all(np.abs(off - got) <= 1e-9 * np.maximum(off, 1.0))
        for f in a.per_flow.values():
            assert f.delivered_mbps >= 0.0 and f.dropped_mbps >= 0.0
        per_flow = sum(f.delivered_mbps + f.dropped_mbps for f in a.per_flow.values())
        assert abs(per_flow - off[-1]) <= 1e-9 * max(off[-1], 1.0)


# -- 6 -----------------------------------------------------------------------

@pytest.mark.criterion(6, "cascade depth on the under-provisioned chain")
def test_c6_cascade_mechanism():
    kg, tm = cascade_chain()
    cfg = SimulationConfig(horizon_s=120.0)
    s = Scenario("cut", [FailureEvent(EventType.FIBER_LINK_FAILURE, "A-D", 10.0, Severity.HIGH)])
    res = run(s, kg, tm, cfg)
    assert res.cascade_depth >= 2
    assert res.induced_events
    for e in res.induced_events:
        assert e.timestamp >= res.events[e.cause].timestamp + cfg.cascade_grace_s


# -- 7 -----------------------------------------------------------------------

@pytest.mark.criterion(7, "ablation ordering of mean cascade depth")
def test_c7_ablation_ordering():
    t0 = time.perf_counter()
    kg, tm = deep_dependency()
    rep = run_ablation_suite(LoopConfig(iterations=50, seed=0), kg, tm)
    d = {name: c.mean_cascade_depth for name, c in rep.campaigns.items()}
    assert d["full"] >= d["no_feedback"] >= d["no_causal"]
    assert d["full"] > d["no_kg"]
    assert d["full"] > d["no_causal"]
    assert time.perf_counter() - t0 < 180.0


# -- 8 -----------------------------------------------------------------------

@pytest.mark.criterion(8, "mitigation effectiveness on the triangle fiber cut")
def test_c8_mitigation():
    kg, tm = fiber_cut_triangle()
    s = Scenario("cut", [FailureEvent(EventType.FIBER_LINK_FAILURE, "A-C", 100.0, Severity.MEDIUM)])
    reports = mitigate.evaluate(s, kg, tm, SimulationConfig(horizon_s=600.0))
    reroute = next(r for r in reports if any(isinstance(a, Reroute) for a in r.plan.actions))
    assert reroute.post_final.loss_fraction == 0.0
    assert reroute.effectiveness >= 0.3
    best = max(r.effectiveness for r in reports)
    rollback = next(r for r in reports if r.plan.name == "rollback_all")
    assert rollback.effectiveness >= best - 0.05


# -- 9 -----------------------------------------------------------------------

@pytest.mark.criterion(9, "running maximum impact never decreases")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_c9_running_max(seed):
    for kg, tm in (deep_dependency(), cascade_chain(), fiber_cut_triangle()):
        rep = run_campaign(LoopConfig(iterations=10, seed=seed, sim=SimulationConfig(horizon_s=300.0)), kg, tm)
        trace = rep.running_max
        assert len(trace) == 10
        assert all(b >= a for a, b in zip(trace, trace[1:]))


# -- 10 ----------------------------------------------------------------------

def _valid(s, ctx):
    c = ctx.constraints
    return validate(s, ctx.subgraph, horizon_s=c.horizon_s, max_events=c.max_events, causal=c.causal).valid


def _wrap(*events):
    return "```json\n" + json.dumps({"id": "m", "events": list(events)}) + "\n```"


@pytest.mark.criterion(10, "every generator backend emits valid scenarios")
def test_c10_rule_and_replay_backends():
    kg, _ = deep_dependency()
    kg = with_incidents(kg, [IncidentRecord("fiber_link_failure", "R00-R01"), IncidentRecord("node_failure", "R03"),
                             IncidentRecord("router_overload", "B02"), IncidentRecord("node_failure", "GONE")])
    for seed in range(100):
        for cls in (None, *ScenarioClass):
            for causal in (True, False):
                ctx = GeneratorContext(kg, Constraints(cls, 16, 600.0, causal), seed=seed)
                assert _valid(propose_rule_based(ctx), ctx)
        ctx = GeneratorContext(kg, Constraints(None, 16, 600.0), seed=seed)
        assert _valid(propose_replay(kg.incidents, ctx), ctx)


@pytest.mark.criterion(10, "every generator backend emits valid scenarios")
def test_c10_llm_repair_path():
    bad = {"event_type": "fiber_link_failure", "target": "X-Y", "timestamp": 1, "severity": "high"}
    client = ScriptedClient([_wrap(bad), _wrap(json.loads(REFERENCE_EVENT))])
    ctx = GeneratorContext(triangle(), Constraints())
    s = propose_llm(ctx, client)
    assert s.meta["attempts"] == 2
    assert len(client.calls) == 2
    assert _valid(s, ctx)


@pytest.mark.criterion(10, "every generator backend emits valid scenarios")
def test_c10_llm_call_cap():
    for seed in range(20):
        replies = ["nothing", "{oops", _wrap({"event_type": "bogus"}), _wrap(json.loads(REFERENCE_EVENT))]
        client = ScriptedClient(replies)
        ctx = GeneratorContext(triangle(), Constraints(), seed=seed)
        s = propose_llm(ctx, client)
        assert len(client.calls) <= 3
        assert _valid(s, ctx)
