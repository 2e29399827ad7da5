"""Event-driven digital twin.

Time is continuous: scenario events, induced cascade trips, delayed route
installs and overload checks are processed in timestamp order, and KPIs are
sampled on a fixed grid. Between two processed items the network state is
constant, so sample rows are filled in blocks.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from ..errors import IntegrityError
from ..kgraph import Kind, KnowledgeGraph
from ..scenario import EventType, FailureEvent, Scenario, Severity
from . import kernels
from .model import (ACCOUNTING_COLUMNS, KPI_COLUMNS, FlowOutcome, KpiSample, KpiSeries,
                    SimulationConfig, SimulationResult, TrafficMatrix, router_count)

log = logging.getLogger(__name__)

# processing order of items sharing a timestamp
_EVENT, _ACTION, _INSTALL, _CHECK = 0, 1, 2, 3


class NetworkIndex:
    """Array view of the router/link topology of a graph."""

    def __init__(self, kg: KnowledgeGraph):
        self.routers = kg.routers
        self.r_idx = {r: i for i, r in enumerate(self.routers)}
        self.links = [lid for lid in kg.links if lid in kg.link_endpoints]
        self.l_idx = {lid: i for i, lid in enumerate(self.links)}
        comps = kg.components
        self.prop = np.array([float(comps[l].attrs["prop_latency_ms"]) for l in self.links], dtype=np.float64)
        self.cap0 = np.array([float(comps[l].attrs["capacity_mbps"]) for l in self.links], dtype=np.float64)
        self.units = np.array([float(comps[r].attrs.get("cpu_units", 10.0)) for r in self.routers],
                              dtype=np.float64)
        adj: list[list[tuple[int, int]]] = [[] for _ in self.routers]
        self.router_links: list[list[int]] = [[] for _ in self.routers]
        for li, lid in enumerate(self.links):
            a, b = (self.r_idx[x] for x in kg.link_endpoints[lid])
            adj[a].append((b, li))
            adj[b].append((a, li))
            self.router_links[a].append(li)
            self.router_links[b].append(li)
        indptr = [0]
        nodes, lks = [], []
        for row in adj:
            row.sort()
            nodes.extend(v for v, _ in row)
            lks.extend(l for _, l in row)
            indptr.append(len(nodes))
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.adj_node = np.asarray(nodes, dtype=np.int64)
        self.adj_link = np.asarray(lks, dtype=np.int64)


@dataclass
class Paths:
    ptr: np.ndarray
    links: np.ndarray
    hops: np.ndarray

    def of(self, f: int) -> tuple[int, ...]:
        return tuple(self.links[self.ptr[f]:self.ptr[f + 1]].tolist())

    def as_lists(self) -> list[tuple[int, ...]]:
        p = self.ptr.tolist()
        l = self.links.tolist()
        return [tuple(l[p[i]:p[i + 1]]) for i in range(len(p) - 1)]


class OverloadTracker:
    """Tracks how long each component has continuously been over threshold."""

    def __init__(self) -> None:
        self.since: dict[str, tuple[float, int | None]] = {}
        self.tripped: set[str] = set()

    def copy(self) -> "OverloadTracker":
        t = OverloadTracker()
        t.since = dict(self.since)
        t.tripped = set(self.tripped)
        return t

    def update(self, clock: float, over: Iterable[str], watched: Iterable[str],
               cause: int | None, grace: float) -> list[tuple[float, str]]:
        """Record the current over-threshold set; return newly started (due_time, key)."""
        over = set(over)
        new = []
        for key in watched:
            if key in self.tripped:
                self.since.pop(key, None)
                continue
            if key in over:
                if key not in self.since:
                    self.since[key] = (clock, cause)
                    new.append((clock + grace, key))
            else:
                self.since.pop(key, None)
        return new


class NetworkState:
    """Mutable component and traffic state of one simulation."""

    def __init__(self, kg: KnowledgeGraph, traffic: TrafficMatrix, config: SimulationConfig,
                 index: NetworkIndex | None = None):
        traffic.check_against(kg)
        self.kg = kg
        self.traffic = traffic
        self.config = config
        self.index = index or NetworkIndex(kg)
        ix = self.index
        self.clock = 0.0
        self.link_up = np.ones(len(ix.links), dtype=np.uint8)
        self.link_cap = ix.cap0.copy()
        self.router_up = np.ones(len(ix.routers), dtype=np.uint8)
        self.router_extra_cpu = np.zeros(len(ix.routers))
        self.link_avoid = np.zeros(len(ix.links), dtype=np.uint8)
        self.router_avoid = np.zeros(len(ix.routers), dtype=np.uint8)
        self.flow_ids = [f.flow_id for f in traffic]
        self.f_idx = {fid: i for i, fid in enumerate(self.flow_ids)}
        self.flow_src = np.array([ix.r_idx[f.src] for f in traffic], dtype=np.int64)
        self.flow_dst = np.array([ix.r_idx[f.dst] for f in traffic], dtype=np.int64)
        self.priority = np.array([f.priority for f in traffic], dtype=np.int64)
        self.demand = np.array([f.demand_mbps for f in traffic], dtype=np.float64)
        self.flow_on = np.ones(len(traffic), dtype=np.uint8)
        self.tracker = OverloadTracker()
        self.last_convergence_ms = 0.0
        self.paths = self.route()
        self.refresh()

    def copy(self) -> "NetworkState":
        new = object.__new__(NetworkState)
        new.__dict__.update(self.__dict__)
        for name in ("link_up", "link_cap", "router_up", "router_extra_cpu", "link_avoid",
                     "router_avoid", "demand", "flow_on"):
            setattr(new, name, getattr(self, name).copy())
        new.tracker = self.tracker.copy()
        return new

    # -- routing -------------------------------------------------------------
    def route(self) -> Paths:
        ix = self.index
        link_ok = (self.link_up & (1 - self.link_avoid)).astype(np.uint8)
        node_ok = (self.router_up & (1 - self.router_avoid)).astype(np.uint8)
        ptr, links, hops = kernels.route_flows(ix.indptr, ix.adj_node, ix.adj_link, ix.prop, link_ok,
                                               node_ok, self.flow_src, self.flow_dst, self.flow_on)
        return Paths(ptr, links, hops)

    def routing_map(self, paths: Paths | None = None) -> dict[str, list[str]]:
        paths = paths or self.paths
        names = self.index.links
        return {fid: [names[l] for l in paths.of(i)] for i, fid in enumerate(self.flow_ids)}

    def _effective_paths(self) -> Paths:
        """Installed paths with flows crossing a down component removed (in limbo)."""
        p = self.paths
        n = len(self.flow_ids)
        counts = np.diff(p.ptr)
        if len(p.links) == 0:
            return p
        bad_k = (self.link_up[p.links] == 0) | (self.router_up[p.hops] == 0)
        owner = np.repeat(np.arange(n), counts)
        broken = np.bincount(owner, weights=bad_k, minlength=n) > 0
        broken |= (self.router_up[self.flow_dst] == 0) & (counts > 0)
        if not broken.any():
            return p
        keep = ~broken[owner]
        new_counts = np.where(broken, 0, counts)
        ptr = np.concatenate(([0], np.cumsum(new_counts))).astype(np.int64)
        return Paths(ptr, p.links[keep], p.hops[keep])

    # -- assignment ------------------------------------------------------------
    def refresh(self) -> None:
        self.effective = self._effective_paths()
        e = self.effective
        cfg = self.config
        self.link_load, self.router_cpu, self.flow_latency, self.flow_loss = kernels.flow_metrics(
            e.ptr, e.links, e.hops, self.flow_dst, self.demand, self.flow_on, self.link_cap,
            self.index.prop, self.link_up, self.router_extra_cpu, self.index.units, cfg.latency_mult_cap)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.utilization = np.where(self.link_up == 1, self.link_load / self.link_cap, 0.0)

    def over_threshold(self) -> tuple[list[str], list[str]]:
        cfg = self.config
        ix = self.index
        watched = [ix.links[i] for i in np.flatnonzero(self.link_up)]
        over = [ix.links[i] for i in np.flatnonzero((self.link_up == 1) & (self.utilization >= cfg.cascade_threshold))]
        if cfg.cpu_trip:
            up = np.flatnonzero(self.router_up)
            watched += [ix.routers[i] for i in up]
            ratio = self.router_cpu / ix.units
            over += [ix.routers[i] for i in up if ratio[i] >= cfg.cpu_trip_ratio]
        return over, watched

    # -- event effects ----------------------------------------------------------
    def apply_effects(self, ev: FailureEvent) -> list[tuple[str, int, Any]] | None:
        """Apply ``ev`` to component state; return an undo log, or None for a no-op."""
        ix = self.index
        cfg = self.config
        undo: list[tuple[str, int, Any]] = []
        et = ev.event_type
        kind = self.kg.kind_of(ev.target) if ev.target in self.kg else None
        if kind is None and ev.target in self.f_idx:  # flow given only through the traffic matrix
            kind = Kind.FLOW

        def link_down(li: int) -> None:
            if self.link_up[li]:
                undo.append(("link_up", li, 1))
                self.link_up[li] = 0

        if kind is Kind.LINK and ev.target in ix.l_idx and et in (EventType.FIBER_LINK_FAILURE,
                                                                  EventType.CASCADING_TRIP):
            li = ix.l_idx[ev.target]
            if not self.link_up[li]:
                return self._noop(ev, "link already down")
            factor = 0.0 if et is EventType.CASCADING_TRIP else cfg.fiber_capacity_factor[ev.severity.value]
            if factor <= 0:
                link_down(li)
            else:
                undo.append(("link_cap", li, float(self.link_cap[li])))
                self.link_cap[li] *= factor
        elif kind is Kind.ROUTER and et in (EventType.NODE_FAILURE, EventType.CASCADING_TRIP):
            ri = ix.r_idx[ev.target]
            if not self.router_up[ri]:
                return self._noop(ev, "router already down")
            undo.append(("router_up", ri, 1))
            self.router_up[ri] = 0
            for li in ix.router_links[ri]:
                link_down(li)
        elif kind is Kind.ROUTER and et is EventType.ROUTER_OVERLOAD:
            ri = ix.r_idx[ev.target]
            if not self.router_up[ri]:
                return self._noop(ev, "router already down")
            undo.append(("router_extra_cpu", ri, float(self.router_extra_cpu[ri])))
            self.router_extra_cpu[ri] += cfg.overload_cpu_factor[ev.severity.value] * ix.units[ri]
        elif et is EventType.TRAFFIC_SPIKE and kind in (Kind.FLOW, Kind.ROUTER):
            mult = float(ev.params.get("spike_multiplier", cfg.spike_multiplier[ev.severity.value]))
            if kind is Kind.FLOW:
                targets = [self.f_idx[ev.target]] if ev.target in self.f_idx else []
            else:
                targets = np.flatnonzero(self.flow_dst == ix.r_idx[ev.target]).tolist()
            if not targets:
                return self._noop(ev, "no traffic to spike")
            for f in targets:
                undo.append(("demand", f, float(self.demand[f])))
                self.demand[f] *= mult
        else:
            return self._noop(ev, f"{et.value} not applicable to {ev.target!r}")
        return undo

    def _noop(self, ev: FailureEvent, why: str) -> None:
        msg = f"t={ev.timestamp}: {ev.event_type.value} on {ev.target!r} ignored ({why})"
        log.info(msg)
        self.notes.append(msg)
        return None

    @property
    def notes(self) -> list[str]:
        if "_notes" not in self.__dict__:
            self._notes: list[str] = []
        return self._notes

    def restore(self, undo: Sequence[tuple[str, int, Any]]) -> None:
        for name, i, old in reversed(undo):
            getattr(self, name)[i] = old

    def convergence_ms(self, old: Paths, new: Paths) -> tuple[float, bool]:
        before, after = old.as_lists(), new.as_lists()
        changed = [len(b) for a, b in zip(before, after) if a != b]
        if not changed:
            return 0.0, False
        cfg = self.config
        return cfg.detect_delay_ms + cfg.per_hop_update_ms * max(changed), True

    # -- KPIs --------------------------------------------------------------------
    def kpi(self, base_latency: np.ndarray | None = None) -> tuple[float, ...]:
        cfg = self.config
        on = self.flow_on == 1
        dem = self.demand
        offered = float(dem[on].sum())
        dropped_f = np.where(on, dem * self.flow_loss, 0.0)
        delivered_f = np.where(on, dem * (1.0 - self.flow_loss), 0.0)
        dropped = float(dropped_f.sum())
        delivered = float(delivered_f.sum())
        loss = dropped / offered if offered > 0 else 0.0
        lat = self.flow_latency[on & np.isfinite(self.flow_latency)]
        if len(lat):
            mean = float(lat.mean())
            srt = np.sort(lat)
            p95 = float(srt[max(0, math.ceil(0.95 * len(srt)) - 1)])
            p95 = max(p95, mean)
        else:
            mean = p95 = 0.0
        up = self.link_up == 1
        util = self.utilization[up]
        umax = float(util.max()) if len(util) else 0.0
        umean = float(util.mean()) if len(util) else 0.0
        hit = on & (self.flow_loss > cfg.impacted_loss)
        if base_latency is not None:
            ok = np.isfinite(base_latency) & (base_latency > 0)
            with np.errstate(invalid="ignore"):
                hit |= on & ok & (self.flow_latency >= cfg.impacted_latency_ratio * np.where(ok, base_latency, 1.0))
        if hit.any():
            impacted = float(len(np.union1d(self.flow_src[hit], self.flow_dst[hit])))
        else:
            impacted = 0.0
        return (mean, p95, loss, umax, umean, impacted, offered, delivered, dropped)


# ---------------------------------------------------------------------------
# standalone operations


def compute_routes(kg: KnowledgeGraph, state: NetworkState) -> dict[str, list[str]]:
    """Shortest (min total propagation latency) path per flow over up components."""
    if state.kg is not kg and set(state.index.links) != set(l for l in kg.links if l in kg.link_endpoints):
        raise IntegrityError("state does not belong to this graph")
    return state.routing_map(state.route())


def assign_flows(state: NetworkState, traffic: TrafficMatrix | None = None) -> NetworkState:
    """Return a copy of ``state`` carrying ``traffic`` with link/router loads recomputed."""
    if traffic is None or traffic is state.traffic:
        new = state.copy()
        new.refresh()
        return new
    new = NetworkState(state.kg, traffic, state.config, state.index)
    for name in ("link_up", "link_cap", "router_up", "router_extra_cpu", "link_avoid", "router_avoid"):
        setattr(new, name, getattr(state, name).copy())
    new.clock = state.clock
    new.paths = new.route()
    new.refresh()
    return new


def apply_event(state: NetworkState, ev: FailureEvent) -> NetworkState:
    """Apply one event, recompute and install routes, and return the new state.

    The modelled reroute convergence time is left in ``last_convergence_ms``.
    """
    new = state.copy()
    new.clock = max(state.clock, ev.timestamp)
    undo = new.apply_effects(ev)
    if undo is None:
        new.last_convergence_ms = 0.0
        return new
    fresh = new.route()
    new.last_convergence_ms, _ = new.convergence_ms(new.paths, fresh)
    new.paths = fresh
    new.refresh()
    return new


def cascade_check(state: NetworkState, config: SimulationConfig | None = None) -> list[FailureEvent]:
    """Trips due at ``state.clock``: components over threshold for at least the grace period."""
    cfg = config or state.config
    due = []
    for key, (since, cause) in sorted(state.tracker.since.items()):
        if key not in state.tracker.tripped and since + cfg.cascade_grace_s <= state.clock:
            due.append(FailureEvent(EventType.CASCADING_TRIP, key, state.clock, Severity.HIGH, cause))
    return due


def track_overloads(state: NetworkState, cause: int | None = None) -> list[tuple[float, str]]:
    over, watched = state.over_threshold()
    return state.tracker.update(state.clock, over, watched, cause, state.config.cascade_grace_s)


def cascade_depth(events: Sequence[FailureEvent]) -> int:
    """Longest chain of cause links (a lone event has depth 0)."""
    depth = [0] * len(events)
    for i, ev in enumerate(events):
        if ev.cause is not None and 0 <= ev.cause < i:
            depth[i] = depth[ev.cause] + 1
    return max(depth, default=0)


# ---------------------------------------------------------------------------
# full run


class _Run:
    def __init__(self, scenario: Scenario, kg: KnowledgeGraph, traffic: TrafficMatrix,
                 config: SimulationConfig, actions: Sequence[tuple[float, Any]]):
        self.cfg = config
        self.state = NetworkState(kg, traffic, config)
        self.events: list[FailureEvent] = list(scenario.events)
        self.n_primary = len(self.events)
        self.heap: list[tuple] = []
        self.seq = 0
        self.undo: dict[int, list] = {}
        self.applied: list[int] = []
        self.suppressed: set[int] = set()
        self.conv: dict[int, float] = {}
        self.last_cause: int | None = None
        for i, ev in enumerate(self.events):
            self._push(ev.timestamp, _EVENT, ("event", i))
        for t, action in actions:
            self._push(t, _ACTION, ("action", action))
        self.base_latency = self.state.flow_latency.copy()
        self.kpi = self.state.kpi(self.base_latency)
        self.baseline = KpiSample(0.0, *self.kpi[:6])
        self._track(None)

    def _push(self, t: float, order: int, item: tuple) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, order, self.seq, item))

    def _track(self, cause: int | None) -> None:
        for due, _key in track_overloads(self.state, cause):
            self._push(due, _CHECK, ("check",))

    def _refresh(self, cause: int | None) -> None:
        self.state.refresh()
        self._track(cause)
        self.kpi = self.state.kpi(self.base_latency)

    def _apply(self, idx: int) -> None:
        st = self.state
        ev = self.events[idx]
        undo = st.apply_effects(ev)
        if undo is None:
            if idx < self.n_primary:
                self.conv[idx] = 0.0
            return
        self.undo[idx] = undo
        self.applied.append(idx)
        if ev.event_type is EventType.CASCADING_TRIP:
            st.tracker.tripped.add(ev.target)
        fresh = st.route()
        conv, changed = st.convergence_ms(st.paths, fresh)
        if idx < self.n_primary:
            self.conv[idx] = conv
        if changed:
            self._push(st.clock + conv / 1000.0, _INSTALL, ("install", idx))
        self.last_cause = idx
        self._refresh(idx)

    def _reinstall(self) -> None:
        self.state.paths = self.state.route()
        self._refresh(self.last_cause)

    # hooks used by mitigation actions ------------------------------------------
    def avoid(self, ids: Iterable[str]) -> None:
        ix = self.state.index
        for cid in ids:
            if cid in ix.l_idx:
                self.state.link_avoid[ix.l_idx[cid]] = 1
            elif cid in ix.r_idx:
                self.state.router_avoid[ix.r_idx[cid]] = 1
        self._reinstall()

    def boost(self, link: str, factor: float) -> None:
        ix = self.state.index
        if link in ix.l_idx:
            self.state.link_cap[ix.l_idx[link]] *= factor
        self._reinstall()

    def shed(self, keep_priority: int) -> None:
        st = self.state
        st.flow_on = np.where(st.priority > keep_priority, 0, st.flow_on).astype(np.uint8)
        self._reinstall()

    def rollback(self, indices: Iterable[int]) -> None:
        undo_set = {i for i in indices if 0 <= i < self.n_primary}
        for i in range(self.n_primary, len(self.events)):
            if self.events[i].cause in undo_set:
                undo_set.add(i)
        for i in reversed(self.applied):
            if i in undo_set:
                self.state.restore(self.undo.pop(i))
        self.applied = [i for i in self.applied if i not in undo_set]
        self.suppressed |= undo_set
        self._reinstall()

    # -------------------------------------------------------------------------
    def execute(self) -> SimulationResult:
        cfg = self.cfg
        dt = cfg.sample_interval_s
        n_ticks = int(math.floor(cfg.horizon_s / dt + 1e-9)) + 1
        ticks = np.arange(n_ticks, dtype=np.float64) * dt
        ncol = len(KPI_COLUMNS) + len(ACCOUNTING_COLUMNS)
        table = np.empty((n_ticks, ncol))
        k = 0
        while self.heap:
            t = self.heap[0][0]
            if t > cfg.horizon_s:
                break
            k2 = int(np.searchsorted(ticks, t, side="left"))
            if k2 > k:
                table[k:k2] = self.kpi
                k = k2
            _, order, _, item = heapq.heappop(self.heap)
            self.state.clock = t
            kind = item[0]
            if kind == "event":
                if item[1] not in self.suppressed:
                    self._apply(item[1])
            elif kind == "install":
                self.state.paths = self.state.route()
                self._refresh(item[1])
            elif kind == "check":
                for trip in cascade_check(self.state, cfg):
                    self.events.append(trip)
                    self._apply(len(self.events) - 1)
            elif kind == "action":
                item[1].apply(self)
        table[k:] = self.kpi
        return self._result(ticks, table)

    def _result(self, ticks: np.ndarray, table: np.ndarray) -> SimulationResult:
        st = self.state
        names = KPI_COLUMNS + ACCOUNTING_COLUMNS
        series = KpiSeries(ticks, {c: table[:, i].copy() for i, c in enumerate(names)})
        per_flow = {}
        eff = st.effective
        for i, fid in enumerate(st.flow_ids):
            if st.flow_on[i]:
                d = float(st.demand[i])
                loss = float(st.flow_loss[i])
                per_flow[fid] = FlowOutcome(d * (1.0 - loss), d * loss, [st.index.links[l] for l in eff.of(i)])
            else:
                per_flow[fid] = FlowOutcome(0.0, 0.0, [])
        ix = st.index
        util = {ix.links[i]: float(st.utilization[i]) for i in np.flatnonzero(st.link_up)}
        down = sorted([ix.links[i] for i in np.flatnonzero(st.link_up == 0)]
                      + [ix.routers[i] for i in np.flatnonzero(st.router_up == 0)])
        first = min((e.timestamp for e in self.events[:self.n_primary]), default=self.cfg.horizon_s)
        return SimulationResult(
            samples=series, baseline=self.baseline, events=list(self.events), n_primary=self.n_primary,
            reroute_convergence=dict(sorted(self.conv.items())), cascade_depth=cascade_depth(self.events),
            per_flow=per_flow, link_utilization=util, down=down, total_routers=router_count(st.kg),
            first_event_s=first, warnings=list(st.notes))


def run(scenario: Scenario, kg: KnowledgeGraph, traffic: TrafficMatrix | None = None,
        config: SimulationConfig | None = None, actions: Sequence[tuple[float, Any]] = ()) -> SimulationResult:
    """Simulate ``scenario`` over ``kg`` carrying ``traffic`` (default: the graph's flows).

    ``actions`` are ``(time, action)`` pairs; each action's ``apply(run)`` is
    called at its time, after scenario events scheduled for the same instant.
    """
    config = config or SimulationConfig()
    if traffic is None:
        traffic = TrafficMatrix.from_kg(kg)
    traffic.check_against(kg)
    return _Run(scenario, kg, traffic, config, actions).execute()
