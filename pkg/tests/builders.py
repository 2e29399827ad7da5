"""Random inputs shared by several test modules."""
from __future__ import annotations

import random

from resiloop.kgraph import KnowledgeGraph, build_service_layer
from resiloop.scenario import EventType, FailureEvent, Severity
from resiloop.testbeds import random_graph, random_traffic

EVENT_TYPES = list(EventType)
SEVERITIES = list(Severity)


def random_kg(rng: random.Random, n_routers: int = 5, extra: int = 3, n_flows: int = 2,
              n_deps: int = 3) -> KnowledgeGraph:
    """Routers + links + a couple of flows/services/resources + random DependsOn edges."""
    kg = random_graph(n_routers, extra, rng)
    tm = random_traffic(kg, n_flows, rng)
    spec = tm.service_spec()
    spec["services"] = [{"id": "S0", "depends_on": [tm.flows[0].flow_id]}]
    pool = kg.routers + kg.links + [f.flow_id for f in tm]
    spec["resources"] = [{"id": "PWR", "shared_by": rng.sample(pool, 2)}]
    pool = pool + ["S0", "PWR"]
    spec["dependencies"] = [{"src": a, "dst": b, "relation": "DependsOn"}
                            for a, b in (rng.sample(pool, 2) for _ in range(n_deps))]
    return build_service_layer(kg, spec)


def random_events(rng: random.Random, kg: KnowledgeGraph, n: int) -> list[FailureEvent]:
    """Arbitrary (often invalid) event lists: unknown targets, bad causes, time travel."""
    ids = sorted(kg.components) + ["X-Y", "ghost"]
    out = []
    t = 0.0
    for i in range(n):
        t = max(0.0, t + rng.choice([-50.0, 0.0, 10.0, 100.0, 2000.0]))
        cause = None
        if rng.random() < 0.4:
            cause = rng.randrange(-1, n + 1)
        out.append(FailureEvent(rng.choice(EVENT_TYPES), rng.choice(ids), t, rng.choice(SEVERITIES), cause))
    return out
