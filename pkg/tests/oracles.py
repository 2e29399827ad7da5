"""Slow, independent reference implementations used as test oracles.

Nothing here calls into the package's query helpers; everything works off
the raw component/edge lists.
"""
from __future__ import annotations

import itertools
import math
from collections import deque


def closure_bfs(kg, start):
    """Dependants of ``start``: reverse DependsOn/RoutesOver, SharesResource both ways, router -> its links."""
    adj = {}
    for e in kg.edges:
        rel = e.relation.value
        if rel in ("DependsOn", "RoutesOver"):
            adj.setdefault(e.dst, set()).add(e.src)
        elif rel == "SharesResource":
            adj.setdefault(e.dst, set()).add(e.src)
            adj.setdefault(e.src, set()).add(e.dst)
        elif rel == "ConnectsTo":  # Router -> Link
            adj.setdefault(e.src, set()).add(e.dst)
    seen = {start}
    todo = [start]
    while todo:
        u = todo.pop()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def endpoints(kg):
    ends = {}
    for e in kg.edges:
        if e.relation.value == "ConnectsTo":
            ends.setdefault(e.dst, []).append(e.src)
    return {l: tuple(sorted(v)) for l, v in ends.items()}


def reachable_bfs(kg, a, b, failed):
    if a in failed or b in failed:
        return False
    nbrs = {}
    for l, (x, y) in endpoints(kg).items():
        if l in failed or x in failed or y in failed:
            continue
        nbrs.setdefault(x, []).append(y)
        nbrs.setdefault(y, []).append(x)
    seen = {a}
    q = deque([a])
    while q:
        u = q.popleft()
        if u == b:
            return True
        for v in nbrs.get(u, ()):
            if v not in seen:
                seen.add(v)
                q.append(v)
    return False


def floyd_warshall(nodes, weighted_edges):
    """All-pairs shortest distances; ``weighted_edges`` is [(a, b, w)] undirected."""
    d = {(u, v): (0 if u == v else math.inf) for u in nodes for v in nodes}
    for a, b, w in weighted_edges:
        if w < d[a, b]:
            d[a, b] = d[b, a] = w
    for k in nodes:
        for i in nodes:
            dik = d[i, k]
            if dik == math.inf:
                continue
            for j in nodes:
                if dik + d[k, j] < d[i, j]:
                    d[i, j] = dik + d[k, j]
    return d


def hop_distances(kg, seeds):
    """Undirected hop counts: router-router through a link is one hop, link-to-endpoint one hop,
    any dependency edge one hop."""
    ends = endpoints(kg)
    adj = {c: set() for c in kg.components}
    for e in kg.edges:
        adj[e.src].add(e.dst)
        adj[e.dst].add(e.src)
    for l, (x, y) in ends.items():
        if len(ends[l]) == 2:
            adj[x].add(y)
            adj[y].add(x)
    dist = {s: 0 for s in seeds}
    q = deque(seeds)
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


_KINDS = {
    "fiber_link_failure": {"Link"},
    "router_overload": {"Router"},
    "node_failure": {"Router"},
    "traffic_spike": {"Flow", "Router"},
    "cascading_trip": {"Link", "Router"},
}


def brute_validate(events, kg, horizon=3600.0, max_events=64, causal=True):
    """Set of (rule, event_index) pairs, computed from scratch."""
    out = set()
    if not 1 <= len(events) <= max_events:
        out.add(("C5", -1))
    kinds = {cid: c.kind.value for cid, c in kg.components.items()}
    ends = endpoints(kg)
    links_of = {}
    for l, rs in ends.items():
        for r in rs:
            links_of.setdefault(r, set()).add(l)
    down = set()
    for i, ev in enumerate(events):
        et = ev.event_type.value
        if ev.target not in kinds or kinds[ev.target] not in _KINDS[et]:
            out.add(("C1", i))
        if i and ev.timestamp < events[i - 1].timestamp:
            out.add(("C2", i))
        if causal and ev.cause is not None:
            c = ev.cause
            if not (0 <= c < i) or events[c].target not in kinds or ev.target not in closure_bfs(kg, events[c].target):
                out.add(("C3", i))
        if ev.target in down:
            out.add(("C4", i))
        if ev.timestamp < 0 or ev.timestamp > horizon:
            out.add(("C5", i))
        failing = et in ("node_failure", "cascading_trip") or (et == "fiber_link_failure" and ev.severity.value == "high")
        if failing:
            down.add(ev.target)
            if kinds.get(ev.target) == "Router":
                down |= links_of.get(ev.target, set())
    return out


def brute_best_path(nodes, weighted_edges, src, dst):
    """(cost, node sequence) of the lexicographically smallest min-cost simple path, by enumeration."""
    w = {}
    for a, b, c in weighted_edges:
        w[a, b] = w[b, a] = c
    best = None
    others = [n for n in nodes if n not in (src, dst)]
    for r in range(len(others) + 1):
        for mid in itertools.permutations(others, r):
            seq = (src,) + mid + (dst,)
            if all((seq[i], seq[i + 1]) in w for i in range(len(seq) - 1)):
                cost = sum(w[seq[i], seq[i + 1]] for i in range(len(seq) - 1))
                cand = (cost, seq)
                if best is None or cand < best:
                    best = cand
    return best
