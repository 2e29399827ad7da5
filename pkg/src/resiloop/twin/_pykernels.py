"""Pure-Python twin kernels.

Reference implementation of the routines in ``_ckernels.pyx``. Both versions
perform the same floating-point operations in the same order, so their
outputs are bit-identical; the test-suite checks this.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

INF = math.inf
KNEE = 0.95


def queue_multiplier(u: float, cap: float) -> float:
    """Queueing delay multiplier m(u): 1/(1-u) below the knee, tangent line above, capped."""
    if u < KNEE:
        m = 1.0 / (1.0 - u)
    else:
        m = 1.0 / (1.0 - KNEE) + (u - KNEE) / ((1.0 - KNEE) * (1.0 - KNEE))
    return m if m < cap else cap


def _dist_to(target, indptr, adj_node, adj_link, link_w, link_ok, node_ok, n):
    dist = [INF] * n
    dist[target] = 0.0
    heap = [(0.0, target)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for k in range(indptr[u], indptr[u + 1]):
            lk = adj_link[k]
            v = adj_node[k]
            if not link_ok[lk] or not node_ok[v]:
                continue
            nd = d + link_w[lk]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_dist(indptr, adj_node, adj_link, link_w, link_ok, node_ok, target):
    n = len(indptr) - 1
    if not node_ok[target]:
        return np.full(n, np.inf)
    return np.asarray(_dist_to(int(target), indptr.tolist(), adj_node.tolist(), adj_link.tolist(),
                               link_w.tolist(), link_ok.tolist(), node_ok.tolist(), n))


def route_flows(indptr, adj_node, adj_link, link_w, link_ok, node_ok, flow_src, flow_dst, flow_on):
    """Route every active flow on its latency-shortest path.

    Ties go to the lexicographically smallest router sequence (router index
    order equals name order). Returns ``(path_ptr, path_links, path_hops)``
    where ``path_hops[k]`` is the router transmitting onto ``path_links[k]``.
    Unroutable or inactive flows get an empty path.
    """
    n = len(indptr) - 1
    ip, an, al = indptr.tolist(), adj_node.tolist(), adj_link.tolist()
    w, lok, nok = link_w.tolist(), link_ok.tolist(), node_ok.tolist()
    srcs, dsts, on = flow_src.tolist(), flow_dst.tolist(), flow_on.tolist()
    cache: dict[int, list[float]] = {}
    ptr = [0]
    links: list[int] = []
    hops: list[int] = []
    for f in range(len(srcs)):
        s, t = srcs[f], dsts[f]
        if on[f] and nok[s] and nok[t]:
            dist = cache.get(t)
            if dist is None:
                dist = cache[t] = _dist_to(t, ip, an, al, w, lok, nok, n)
            if dist[s] < INF:
                u = s
                while u != t:
                    du = dist[u]
                    for k in range(ip[u], ip[u + 1]):
                        lk = al[k]
                        v = an[k]
                        if lok[lk] and nok[v] and dist[v] + w[lk] == du:
                            break
                    else:  # pragma: no cover - dist came from the same relaxations
                        raise RuntimeError("broken shortest-path tree")
                    hops.append(u)
                    links.append(lk)
                    u = v
        ptr.append(len(links))
    return (np.asarray(ptr, dtype=np.int64), np.asarray(links, dtype=np.int64),
            np.asarray(hops, dtype=np.int64))


def flow_metrics(path_ptr, path_links, path_hops, flow_dst, demand, flow_on, link_cap, link_prop,
                 link_ok, router_extra_cpu, router_units, mult_cap):
    """Assign demands to links and compute per-flow latency and loss.

    Returns ``(link_load, router_cpu, flow_latency, flow_loss)``. Router cpu
    is traffic (demand / 1000 per traversed router) plus ``router_extra_cpu``.
    Active flows with an empty path get infinite latency and loss 1; inactive
    flows get latency 0 and loss 0.
    """
    ptr, pl, ph = path_ptr.tolist(), path_links.tolist(), path_hops.tolist()
    dst, dem, on = flow_dst.tolist(), demand.tolist(), flow_on.tolist()
    cap, prop, lok = link_cap.tolist(), link_prop.tolist(), link_ok.tolist()
    cpu = router_extra_cpu.tolist()
    units = router_units.tolist()
    nf = len(dem)
    load = [0.0] * len(cap)
    for f in range(nf):
        a, b = ptr[f], ptr[f + 1]
        if not on[f] or a == b:
            continue
        d = dem[f]
        for k in range(a, b):
            load[pl[k]] += d
            cpu[ph[k]] += d / 1000.0
        cpu[dst[f]] += d / 1000.0
    mult = [1.0] * len(cap)
    lloss = [0.0] * len(cap)
    for lk in range(len(cap)):
        if lok[lk]:
            u = load[lk] / cap[lk]
            mult[lk] = queue_multiplier(u, mult_cap)
            if u > 1.0:
                lloss[lk] = (u - 1.0) / u
    ovl = [0.0] * len(cpu)
    for r in range(len(cpu)):
        if cpu[r] > units[r]:
            ovl[r] = (cpu[r] - units[r]) / units[r]
    lat = [0.0] * nf
    loss = [0.0] * nf
    for f in range(nf):
        if not on[f]:
            continue
        a, b = ptr[f], ptr[f + 1]
        if a == b:
            lat[f] = INF
            loss[f] = 1.0
            continue
        total = 0.0
        keep = 1.0
        for k in range(a, b):
            lk = pl[k]
            total += prop[lk] * mult[lk] * (1.0 + ovl[ph[k]])
            keep *= 1.0 - lloss[lk]
        lat[f] = total
        loss[f] = 1.0 - keep
    return (np.asarray(load), np.asarray(cpu), np.asarray(lat), np.asarray(loss))
