"""Small constructed topologies used by tests, benchmarks and the CLI demo."""
from __future__ import annotations

import random

from .kgraph import KnowledgeGraph, build_service_layer, link_id, load_topology
from .twin import TrafficFlow, TrafficMatrix


def _with_traffic(kg: KnowledgeGraph, tm: TrafficMatrix, extra: dict | None = None) -> tuple[KnowledgeGraph, TrafficMatrix]:
    spec = tm.service_spec()
    if extra:
        spec.update(extra)
    return build_service_layer(kg, spec), tm


def chain(n: int = 3, capacity: float = 1000.0) -> KnowledgeGraph:
    names = [chr(ord("A") + i) for i in range(n)]
    return load_topology("".join(f"{a} {b} {capacity}\n" for a, b in zip(names, names[1:])), "edgelist")


def triangle(latencies: tuple[float, float, float] = (1.0, 1.0, 1.0),
             capacity: float = 1000.0) -> KnowledgeGraph:
    """Routers A, B, C; latencies are for A-B, B-C, A-C."""
    ab, bc, ac = latencies
    return load_topology(f"A B {capacity} {ab}\nB C {capacity} {bc}\nA C {capacity} {ac}\n", "edgelist")


def fiber_cut_triangle() -> tuple[KnowledgeGraph, TrafficMatrix]:
    """Triangle with one 800 Mbps A->C flow on the direct link; A-B-C has spare capacity."""
    tm = TrafficMatrix([TrafficFlow("F1", "A", "C", 800.0, 1)])
    return _with_traffic(triangle(), tm, {"services": [{"id": "S1", "depends_on": ["F1"]}]})


def cascade_chain() -> tuple[KnowledgeGraph, TrafficMatrix]:
    """Four routers: a 1000 Mbps primary A-D and two thinner backups (500 Mbps).

    An 800 Mbps A->D flow fits the primary only; after the primary fails each
    backup path in turn overloads and trips.
    """
    kg = load_topology("A D 1000 1.0\nA B 500 1.0\nB D 500 1.0\nA C 500 1.5\nC D 500 1.5\n", "edgelist")
    tm = TrafficMatrix([TrafficFlow("F1", "A", "D", 800.0, 1)])
    return _with_traffic(kg, tm)


def deep_dependency(length: int = 8) -> tuple[KnowledgeGraph, TrafficMatrix]:
    """A router chain whose routers depend on their upstream link (power/optics).

    ``R(i+1) DependsOn link R(i)-R(i+1)``, so a failure can be traced down the
    chain through many dependency hops. A parallel thin bypass chain gives
    rerouted traffic somewhere to go (and to overload).
    """
    r = [f"R{i:02d}" for i in range(length)]
    b = [f"B{i:02d}" for i in range(length)]
    lines = []
    for i in range(length - 1):
        lines.append(f"{r[i]} {r[i + 1]} 1000 1.0")
        lines.append(f"{b[i]} {b[i + 1]} 400 1.5")
    for i in range(0, length, 2):
        lines.append(f"{r[i]} {b[i]} 400 0.5")
    kg = load_topology("\n".join(lines) + "\n", "edgelist")
    flows = []
    for i in range(0, length - 2, 2):
        flows.append(TrafficFlow(f"F{i:02d}", r[i], r[min(i + 4, length - 1)], 80.0, 1 + i % 3))
    flows.append(TrafficFlow("FBK", b[0], b[length - 1], 40.0, 3))
    tm = TrafficMatrix(flows)
    deps = [{"src": r[i + 1], "dst": link_id(r[i], r[i + 1]), "relation": "DependsOn"} for i in range(length - 1)]
    services = [{"id": f"S{f.flow_id[1:]}", "depends_on": [f.flow_id]} for f in flows]
    resources = [{"id": "PWR-A", "shared_by": [r[0], b[0]]}]
    return _with_traffic(kg, tm, {"dependencies": deps, "services": services, "resources": resources})


def random_graph(n: int, extra_edges: int, rng: random.Random, max_latency: int = 9) -> KnowledgeGraph:
    """Connected random graph: a random spanning tree plus extra edges, integer latencies."""
    names = [f"N{i:02d}" for i in range(n)]
    edges: dict[str, tuple[str, str, int]] = {}
    for i in range(1, n):
        a, b = names[i], names[rng.randrange(i)]
        edges[link_id(a, b)] = (a, b, rng.randint(1, max_latency))
    for _ in range(extra_edges):
        a, b = rng.sample(names, 2)
        edges.setdefault(link_id(a, b), (a, b, rng.randint(1, max_latency)))
    text = "".join(f"{a} {b} 1000 {w}\n" for a, b, w in edges.values())
    return load_topology(text, "edgelist")


def random_traffic(kg: KnowledgeGraph, n_flows: int, rng: random.Random,
                   demand: tuple[float, float] = (10.0, 400.0)) -> TrafficMatrix:
    routers = kg.routers
    flows = []
    for i in range(n_flows):
        a, b = rng.sample(routers, 2)
        flows.append(TrafficFlow(f"F{i:03d}", a, b, round(rng.uniform(*demand), 1), rng.randint(1, 3)))
    return TrafficMatrix(flows)
