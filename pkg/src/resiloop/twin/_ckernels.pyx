# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.uint8_t u8

cdef double KNEE = 0.95


cpdef double queue_multiplier(double u, double cap) noexcept nogil:
    cdef double m
    if u < KNEE:
        m = 1.0 / (1.0 - u)
    else:
        m = 1.0 / (1.0 - KNEE) + (u - KNEE) / ((1.0 - KNEE) * (1.0 - KNEE))
    return m if m < cap else cap


cdef inline bint _less(double ka, i64 na, double kb, i64 nb) noexcept nogil:
    return ka < kb or (ka == kb and na < nb)


cdef void _dist_to(i64 target, const i64[:] indptr, const i64[:] adj_node, const i64[:] adj_link,
                   const double[:] link_w, const u8[:] link_ok, const u8[:] node_ok,
                   double* dist, double* hkey, i64* hnode, i64 n) noexcept nogil:
    # binary heap with lazy deletion; ordering (key, node) mirrors heapq on tuples
    cdef i64 size = 0, i, child, parent, k, v, lk, u
    cdef double d, nd, tk
    cdef i64 tn
    for i in range(n):
        dist[i] = INFINITY
    dist[target] = 0.0
    hkey[0] = 0.0
    hnode[0] = target
    size = 1
    while size > 0:
        d = hkey[0]
        u = hnode[0]
        size -= 1
        if size > 0:
            tk = hkey[size]
            tn = hnode[size]
            i = 0
            while True:
                child = 2 * i + 1
                if child >= size:
                    break
                if child + 1 < size and _less(hkey[child + 1], hnode[child + 1], hkey[child], hnode[child]):
                    child += 1
                if _less(hkey[child], hnode[child], tk, tn):
                    hkey[i] = hkey[child]
                    hnode[i] = hnode[child]
                    i = child
                else:
                    break
            hkey[i] = tk
            hnode[i] = tn
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
                i = size
                size += 1
                while i > 0:
                    parent = (i - 1) // 2
                    if _less(nd, v, hkey[parent], hnode[parent]):
                        hkey[i] = hkey[parent]
                        hnode[i] = hnode[parent]
                        i = parent
                    else:
                        break
                hkey[i] = nd
                hnode[i] = v


def shortest_dist(const i64[:] indptr, const i64[:] adj_node, const i64[:] adj_link,
                  const double[:] link_w, const u8[:] link_ok, const u8[:] node_ok, i64 target):
    cdef i64 n = indptr.shape[0] - 1
    out = np.full(n, np.inf)
    if not node_ok[target]:
        return out
    cdef double[:] o = out
    cdef i64 cap = adj_node.shape[0] + 1
    cdef double* hkey = <double*> malloc(cap * sizeof(double))
    cdef i64* hnode = <i64*> malloc(cap * sizeof(i64))
    try:
        _dist_to(target, indptr, adj_node, adj_link, link_w, link_ok, node_ok, &o[0], hkey, hnode, n)
    finally:
        free(hkey)
        free(hnode)
    return out


def route_flows(const i64[:] indptr, const i64[:] adj_node, const i64[:] adj_link,
                const double[:] link_w, const u8[:] link_ok, const u8[:] node_ok,
                const i64[:] flow_src, const i64[:] flow_dst, const u8[:] flow_on):
    cdef i64 n = indptr.shape[0] - 1
    cdef i64 nf = flow_src.shape[0]
    cdef i64 cap = adj_node.shape[0] + 1
    cdef i64 f, s, t, u, v, k, lk, found
    cdef double du
    # one distance row per destination, computed lazily
    rows = {}
    cdef double[:] Dt
    ptr = np.zeros(nf + 1, dtype=np.int64)
    cdef i64[:] P = ptr
    links = []
    hops = []
    cdef double* hkey = <double*> malloc(cap * sizeof(double))
    cdef i64* hnode = <i64*> malloc(cap * sizeof(i64))
    try:
        for f in range(nf):
            s = flow_src[f]
            t = flow_dst[f]
            if flow_on[f] and node_ok[s] and node_ok[t]:
                row = rows.get(t)
                if row is None:
                    row = rows[t] = np.empty(n)
                    Dt = row
                    _dist_to(t, indptr, adj_node, adj_link, link_w, link_ok, node_ok, &Dt[0], hkey, hnode, n)
                Dt = row
                if Dt[s] < INFINITY:
                    u = s
                    while u != t:
                        du = Dt[u]
                        found = 0
                        for k in range(indptr[u], indptr[u + 1]):
                            lk = adj_link[k]
                            v = adj_node[k]
                            if link_ok[lk] and node_ok[v] and Dt[v] + link_w[lk] == du:
                                found = 1
                                break
                        if not found:
                            raise RuntimeError("broken shortest-path tree")
                        hops.append(u)
                        links.append(lk)
                        u = v
            P[f + 1] = len(links)
    finally:
        free(hkey)
        free(hnode)
    return ptr, np.asarray(links, dtype=np.int64), np.asarray(hops, dtype=np.int64)


def flow_metrics(const i64[:] path_ptr, const i64[:] path_links, const i64[:] path_hops,
                 const i64[:] flow_dst, const double[:] demand, const u8[:] flow_on,
                 const double[:] link_cap, const double[:] link_prop, const u8[:] link_ok,
                 const double[:] router_extra_cpu, const double[:] router_units, double mult_cap):
    cdef i64 nf = demand.shape[0]
    cdef i64 nl = link_cap.shape[0]
    cdef i64 nr = router_units.shape[0]
    cdef i64 f, k, a, b, lk, r
    cdef double d, u, total, keep
    load_a = np.zeros(nl)
    cpu_a = np.array(router_extra_cpu, dtype=np.float64, copy=True)
    lat_a = np.zeros(nf)
    loss_a = np.zeros(nf)
    mult_a = np.ones(nl)
    lloss_a = np.zeros(nl)
    ovl_a = np.zeros(nr)
    cdef double[:] load = load_a
    cdef double[:] cpu = cpu_a
    cdef double[:] lat = lat_a
    cdef double[:] loss = loss_a
    cdef double[:] mult = mult_a
    cdef double[:] lloss = lloss_a
    cdef double[:] ovl = ovl_a
    with nogil:
        for f in range(nf):
            a = path_ptr[f]
            b = path_ptr[f + 1]
            if not flow_on[f] or a == b:
                continue
            d = demand[f]
            for k in range(a, b):
                load[path_links[k]] += d
                cpu[path_hops[k]] += d / 1000.0
            cpu[flow_dst[f]] += d / 1000.0
        for lk in range(nl):
            if link_ok[lk]:
                u = load[lk] / link_cap[lk]
                mult[lk] = queue_multiplier(u, mult_cap)
                if u > 1.0:
                    lloss[lk] = (u - 1.0) / u
        for r in range(nr):
            if cpu[r] > router_units[r]:
                ovl[r] = (cpu[r] - router_units[r]) / router_units[r]
        for f in range(nf):
            if not flow_on[f]:
                continue
            a = path_ptr[f]
            b = path_ptr[f + 1]
            if a == b:
                lat[f] = INFINITY
                loss[f] = 1.0
                continue
            total = 0.0
            keep = 1.0
            for k in range(a, b):
                lk = path_links[k]
                total += link_prop[lk] * mult[lk] * (1.0 + ovl[path_hops[k]])
                keep *= 1.0 - lloss[lk]
            lat[f] = total
            loss[f] = 1.0 - keep
    return load_a, cpu_a, lat_a, loss_a
