import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resiloop.errors import ConfigurationError, IntegrityError
from resiloop.kgraph import load_topology
from resiloop.scenario import EventType, FailureEvent, Scenario, Severity
from resiloop.testbeds import cascade_chain, chain, random_graph, random_traffic, triangle
from resiloop.twin import (NetworkState, SimulationConfig, TrafficFlow, TrafficMatrix, apply_event,
                           assign_flows, cascade_check, cascade_depth, compute_routes, run)
from resiloop.twin.engine import track_overloads
from resiloop.twin.kernels import queue_multiplier

from oracles import brute_best_path, floyd_warshall

CFG = SimulationConfig()
SHORT = SimulationConfig(horizon_s=60.0)


def ev(kind, target, t, sev="high", cause=None, **params):
    return FailureEvent(EventType(kind), target, t, Severity(sev), cause, params)


def state_for(kg, flows, cfg=CFG):
    return NetworkState(kg, TrafficMatrix(flows), cfg)


def util(state, link):
    return float(state.utilization[state.index.l_idx[link]])


# -- routing -----------------------------------------------------------------

def test_route_chain():
    kg = chain(3)
    st_ = state_for(kg, [TrafficFlow("F", "A", "C", 1.0)])
    assert compute_routes(kg, st_) == {"F": ["A-B", "B-C"]}


def test_route_triangle_prefers_two_hops():
    kg = triangle((1.0, 1.0, 3.0))
    st_ = state_for(kg, [TrafficFlow("F", "A", "C", 1.0)])
    assert compute_routes(kg, st_) == {"F": ["A-B", "B-C"]}


def test_route_unroutable_is_empty():
    kg = chain(3)
    st_ = apply_event(state_for(kg, [TrafficFlow("F", "A", "C", 1.0)]), ev("fiber_link_failure", "B-C", 1))
    assert compute_routes(kg, st_) == {"F": []}


def test_compute_routes_rejects_foreign_graph():
    st_ = state_for(chain(3), [TrafficFlow("F", "A", "C", 1.0)])
    with pytest.raises(IntegrityError):
        compute_routes(triangle(), st_)


def _cost(kg, path):
    return sum(kg[l].attrs["prop_latency_ms"] for l in path)


def _node_seq(kg, src, path):
    seq, u = [src], src
    for l in path:
        a, b = kg.link_endpoints[l]
        assert u in (a, b), "path is not contiguous"
        u = b if u == a else a
        seq.append(u)
    return seq


def test_routes_match_floyd_warshall():
    rng = random.Random(4)
    for trial in range(1000):
        kg = random_graph(10, rng.randint(0, 15), rng)
        pairs = [tuple(rng.sample(kg.routers, 2)) for _ in range(6)]
        st_ = state_for(kg, [TrafficFlow(f"F{i}", a, b, 1.0) for i, (a, b) in enumerate(pairs)])
        down = rng.sample(kg.links, rng.randint(0, 3))
        for i, l in enumerate(down):
            st_ = apply_event(st_, ev("fiber_link_failure", l, float(i)))
        up = [(*kg.link_endpoints[l], kg[l].attrs["prop_latency_ms"]) for l in kg.links if l not in down]
        dist = floyd_warshall(kg.routers, up)
        routes = compute_routes(kg, st_)
        for i, (a, b) in enumerate(pairs):
            path = routes[f"F{i}"]
            if math.isinf(dist[a, b]):
                assert path == []
            else:
                assert _node_seq(kg, a, path)[-1] == b
                assert not set(path) & set(down)
                assert _cost(kg, path) == dist[a, b]


def test_route_tie_break_matches_enumeration():
    rng = random.Random(9)
    for _ in range(200):
        kg = random_graph(6, rng.randint(2, 8), rng, max_latency=2)  # small weights: many ties
        a, b = rng.sample(kg.routers, 2)
        st_ = state_for(kg, [TrafficFlow("F", a, b, 1.0)])
        edges = [(*kg.link_endpoints[l], kg[l].attrs["prop_latency_ms"]) for l in kg.links]
        cost, seq = brute_best_path(kg.routers, edges, a, b)
        path = compute_routes(kg, st_)["F"]
        assert _cost(kg, path) == cost
        assert tuple(_node_seq(kg, a, path)) == seq


# -- assignment ----------------------------------------------------------------

def test_assign_single_flow():
    st_ = assign_flows(state_for(chain(2), [TrafficFlow("F", "A", "B", 500.0)]))
    assert util(st_, "A-B") == 0.5


def test_assign_zero_flows():
    st_ = state_for(chain(3), [])
    assert not st_.utilization.any()
    assert st_.kpi()[2] == 0.0


def test_assign_sums_demands():
    kg = chain(2)
    st_ = state_for(kg, [TrafficFlow("F", "A", "B", 10.0)])
    st_ = assign_flows(st_, TrafficMatrix([TrafficFlow("F1", "A", "B", 600.0), TrafficFlow("F2", "B", "A", 600.0)]))
    assert util(st_, "A-B") == pytest.approx(1.2)
    # 200 Mbps over capacity split pro rata: each flow loses 1/6
    assert st_.flow_loss.tolist() == pytest.approx([0.2 / 1.2, 0.2 / 1.2])


def test_router_cpu_from_traffic():
    st_ = state_for(chain(3), [TrafficFlow("F", "A", "C", 500.0)])
    cpu = dict(zip(st_.index.routers, st_.router_cpu.tolist()))
    # every router on the path handles the flow, the destination included
    assert cpu == pytest.approx({"A": 0.5, "B": 0.5, "C": 0.5})


# -- event effects ---------------------------------------------------------------

def test_reference_event_takes_link_down():
    kg = triangle()
    st_ = state_for(kg, [TrafficFlow("F", "B", "C", 100.0)])
    st2 = apply_event(st_, ev("fiber_link_failure", "B-C", 245.8))
    assert st2.clock == 245.8
    assert not st2.link_up[st2.index.l_idx["B-C"]]
    assert compute_routes(kg, st2) == {"F": ["A-B", "A-C"]}
    assert st2.last_convergence_ms == 50 + 10 * 2
    assert st_.link_up.all()  # the input state is untouched


@pytest.mark.parametrize("sev,cap", [("low", 800.0), ("medium", 500.0)])
def test_fiber_severity_table(sev, cap):
    st_ = apply_event(state_for(chain(2), []), ev("fiber_link_failure", "A-B", 1, sev))
    assert st_.link_cap[0] == cap and st_.link_up[0] == 1


@pytest.mark.parametrize("sev,mult", [("low", 2.0), ("medium", 5.0), ("high", 10.0)])
def test_spike_multiplier_table(sev, mult):
    st_ = apply_event(state_for(chain(2), [TrafficFlow("F", "A", "B", 100.0)]), ev("traffic_spike", "F", 1, sev))
    assert st_.demand[0] == 100.0 * mult


def test_spike_on_router_hits_flows_ending_there():
    flows = [TrafficFlow("F1", "A", "C", 10.0), TrafficFlow("F2", "C", "A", 10.0), TrafficFlow("F3", "A", "B", 10.0)]
    st_ = apply_event(state_for(chain(3), flows), ev("traffic_spike", "C", 1, "low"))
    assert st_.demand.tolist() == [20.0, 10.0, 10.0]


@pytest.mark.parametrize("sev,extra", [("low", 5.0), ("medium", 10.0), ("high", 20.0)])
def test_overload_cpu(sev, extra):
    st_ = apply_event(state_for(chain(2), []), ev("router_overload", "A", 1, sev))
    assert st_.router_extra_cpu[0] == extra


def test_overload_adds_latency():
    flows = [TrafficFlow("F", "A", "C", 10.0)]
    base = state_for(chain(3), flows)
    hot = apply_event(base, ev("router_overload", "B", 1, "high"))
    assert hot.flow_latency[0] > base.flow_latency[0]


def test_node_failure_takes_links_down():
    st_ = apply_event(state_for(triangle(), []), ev("node_failure", "B", 1))
    ix = st_.index
    assert not st_.router_up[ix.r_idx["B"]]
    assert [l for l in ix.links if st_.link_up[ix.l_idx[l]]] == ["A-C"]


def test_event_on_down_component_is_noop():
    st_ = apply_event(state_for(chain(2), []), ev("fiber_link_failure", "A-B", 1))
    again = apply_event(st_, ev("cascading_trip", "A-B", 2))
    assert again.notes and "already down" in again.notes[-1]
    assert again.last_convergence_ms == 0.0


# -- cascade tracking --------------------------------------------------------------

def _hot_state(demand):
    st_ = state_for(chain(2), [TrafficFlow("F", "A", "B", demand)])
    track_overloads(st_, cause=0)
    return st_


def test_cascade_trips_after_grace():
    st_ = _hot_state(1200.0)
    st_.clock = 4.9
    assert cascade_check(st_) == []
    st_.clock = 5.0
    trips = cascade_check(st_)
    assert [(e.event_type, e.target, e.timestamp, e.cause) for e in trips] == [
        (EventType.CASCADING_TRIP, "A-B", 5.0, 0)]


def test_cascade_below_threshold_never_trips():
    st_ = _hot_state(990.0)
    st_.clock = 1e6
    assert cascade_check(st_) == []


def test_cascade_relieved_before_grace():
    st_ = _hot_state(1200.0)
    st_.clock = 3.0
    st_ = assign_flows(st_, TrafficMatrix([TrafficFlow("F", "A", "B", 500.0)]))
    track_overloads(st_)
    st_.clock = 10.0
    assert cascade_check(st_) == []


def test_cascade_depth_counts_edges():
    a = ev("node_failure", "A", 0)
    assert cascade_depth([a]) == 0
    assert cascade_depth([a, ev("cascading_trip", "x", 1, cause=0), ev("cascading_trip", "y", 2, cause=1)]) == 2


# -- latency model ----------------------------------------------------------------------

def test_m_at_zero():
    assert queue_multiplier(0.0, 20.0) == 1.0


@given(st.floats(0, 5), st.floats(0, 5))
def test_m_monotone_and_capped(u, v):
    lo, hi = sorted((u, v))
    assert queue_multiplier(lo, 20.0) <= queue_multiplier(hi, 20.0) <= 20.0


def test_m_shape():
    assert queue_multiplier(0.5, 20.0) == 2.0
    assert queue_multiplier(0.9, 20.0) == pytest.approx(10.0)
    # continuous at the knee
    assert queue_multiplier(0.95 - 1e-12, 100.0) == pytest.approx(queue_multiplier(0.95, 100.0))


# -- full runs ----------------------------------------------------------------------------

def test_failure_on_idle_link_changes_nothing():
    kg = triangle()
    tm = TrafficMatrix([TrafficFlow("F", "A", "B", 100.0)])
    res = run(Scenario("s", [ev("fiber_link_failure", "B-C", 10)]), kg, tm, SHORT)
    for s in res.samples:
        assert (s.mean_latency_ms, s.p95_latency_ms, s.loss_fraction, s.impacted_nodes) == (
            res.baseline.mean_latency_ms, res.baseline.p95_latency_ms, res.baseline.loss_fraction, 0)
    assert res.reroute_convergence == {0: 0.0}


def test_chain_cut_timeline():
    kg = chain(3)
    tm = TrafficMatrix([TrafficFlow("F", "A", "C", 100.0)])
    res = run(Scenario("s", [ev("fiber_link_failure", "B-C", 10)]), kg, tm, SHORT)
    loss = res.samples.column("loss_fraction")
    t = res.samples.t
    assert (loss[t < 10] == 0).all()
    assert (loss[t >= 10] == 1.0).all()
    assert res.reroute_convergence[0] == 50.0
    assert res.final.impacted_nodes == 2
    assert res.per_flow["F"].dropped_mbps == 100.0


def test_reroute_converges_after_delay():
    kg = triangle()
    tm = TrafficMatrix([TrafficFlow("F", "A", "C", 100.0)])
    cfg = SimulationConfig(horizon_s=20.0, sample_interval_s=0.01)
    res = run(Scenario("s", [ev("fiber_link_failure", "A-C", 10)]), kg, tm, cfg)
    t, loss = res.samples.t, res.samples.column("loss_fraction")
    conv = res.reroute_convergence[0] / 1000.0
    assert conv == pytest.approx(0.07)
    assert (loss[(t >= 10) & (t < 10 + conv - 1e-9)] == 1.0).all()
    assert (loss[t >= 10 + conv + 1e-9] == 0.0).all()
    assert res.per_flow["F"].path == ["A-B", "B-C"]


def test_cascade_chain_testbed():
    kg, tm = cascade_chain()
    res = run(Scenario("c", [ev("fiber_link_failure", "A-D", 10)]), kg, tm, SimulationConfig(horizon_s=120))
    assert res.cascade_depth >= 2
    for e in res.induced_events:
        assert e.event_type is EventType.CASCADING_TRIP
        assert e.timestamp >= res.events[e.cause].timestamp + CFG.cascade_grace_s


def test_kpi_invariants_random():
    rng = random.Random(12)
    for _ in range(20):
        kg = random_graph(8, 6, rng)
        tm = random_traffic(kg, 12, rng, demand=(100, 900))
        evs = sorted([ev("fiber_link_failure", l, float(rng.randint(0, 50)), rng.choice(["low", "medium", "high"]))
                      for l in rng.sample(kg.links, 3)], key=lambda e: e.timestamp)
        res = run(Scenario("r", evs), kg, tm, SHORT)
        for s in res.samples:
            assert 0.0 <= s.loss_fraction <= 1.0
            assert s.p95_latency_ms >= s.mean_latency_ms >= 0.0


def test_monotone_severity():
    kg = chain(2)
    tm = TrafficMatrix([TrafficFlow("F", "A", "B", 700.0)])
    loss = {}
    for sev in ("low", "medium", "high"):
        res = run(Scenario("m", [ev("fiber_link_failure", "A-B", 5, sev)]), kg, tm, SHORT)
        loss[sev] = res.final.loss_fraction
    assert loss["high"] >= loss["medium"] >= loss["low"]
    assert loss["high"] > loss["low"]


def test_run_rejects_unknown_router():
    with pytest.raises(IntegrityError):
        run(Scenario("s", [ev("node_failure", "A", 1)]), chain(2), TrafficMatrix([TrafficFlow("F", "A", "Z", 1.0)]))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SimulationConfig(cascade_threshold=0.4)
    with pytest.raises(ConfigurationError):
        SimulationConfig(horizon_s=0)


def test_kpi_csv_header_and_rows():
    res = run(Scenario("s", [ev("node_failure", "A", 1)]), chain(2), TrafficMatrix([TrafficFlow("F", "A", "B", 1.0)]),
              SimulationConfig(horizon_s=5))
    lines = res.samples.to_csv().splitlines()
    assert lines[0] == "t,mean_latency_ms,p95_latency_ms,loss_fraction,max_util,mean_util,impacted_nodes"
    assert len(lines) == 7


def test_result_json_is_strict():
    import json
    res = run(Scenario("s", [ev("node_failure", "A", 1)]), chain(2), TrafficMatrix([TrafficFlow("F", "A", "B", 1.0)]),
              SimulationConfig(horizon_s=5))
    json.loads(res.dumps(), parse_constant=lambda c: pytest.fail(f"non-strict constant {c}"))
    assert np.isinf(res.samples.column("mean_latency_ms")).sum() == 0
