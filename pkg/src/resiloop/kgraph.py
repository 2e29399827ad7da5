"""Dependency knowledge graph: routers, links, services, flows and resources.

A :class:`KnowledgeGraph` is immutable once built. Every operation that
"changes" a graph returns a new instance, which keeps graphs safe to share
between concurrent simulations.
"""
from __future__ import annotations

import enum
import heapq
import json
import logging
import warnings
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping

from .errors import IntegrityError, LookupFailure, TopologyParseError

log = logging.getLogger(__name__)

DEFAULT_CAPACITY_MBPS = 1000.0
DEFAULT_LATENCY_MS = 1.0
DEFAULT_CPU_UNITS = 10.0
MAX_RADIUS = 10


class TopologyWarning(UserWarning):
    """Non-fatal ingestion problem (duplicate edge, disconnected topology...)."""


class Kind(str, enum.Enum):
    ROUTER = "Router"
    LINK = "Link"
    SERVICE = "Service"
    FLOW = "Flow"
    RESOURCE = "Resource"


class Relation(str, enum.Enum):
    CONNECTS_TO = "ConnectsTo"
    ROUTES_OVER = "RoutesOver"
    DEPENDS_ON = "DependsOn"
    SHARES_RESOURCE = "SharesResource"
    BACKS_UP = "BacksUp"


def link_id(a: str, b: str) -> str:
    """Canonical link id: endpoint names sorted lexicographically, joined by ``-``."""
    lo, hi = sorted((a, b))
    return f"{lo}-{hi}"


def canonical_target(target: str) -> str:
    """Canonicalize ``target`` if it looks like a link id (exactly one ``-``)."""
    parts = target.split("-")
    if len(parts) == 2 and all(parts):
        return link_id(*parts)
    return target


@dataclass(frozen=True)
class Component:
    id: str
    kind: Kind
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind.value, "attrs": dict(sorted(self.attrs.items()))}


@dataclass(frozen=True, order=True)
class DependencyEdge:
    src: str
    dst: str
    relation: Relation

    def to_json(self) -> dict:
        return {"src": self.src, "dst": self.dst, "relation": self.relation.value}


@dataclass(frozen=True)
class IncidentRecord:
    event_type: str
    target: str
    date: str = ""
    note: str = ""
    severity: str = "high"

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "IncidentRecord":
        try:
            return cls(
                event_type=str(doc["event_type"]),
                target=str(doc["target"]),
                date=str(doc.get("date", "")),
                note=str(doc.get("note", "")),
                severity=str(doc.get("severity", "high")),
            )
        except KeyError as exc:
            raise TopologyParseError(f"incident record missing field {exc.args[0]!r}") from None

    def to_json(self) -> dict:
        return {"event_type": self.event_type, "target": self.target, "date": self.date,
                "note": self.note, "severity": self.severity}


_EDGE_RULES = {
    Relation.CONNECTS_TO: ({Kind.ROUTER}, {Kind.LINK}),
    Relation.ROUTES_OVER: ({Kind.FLOW, Kind.SERVICE}, {Kind.LINK, Kind.ROUTER}),
}


class KnowledgeGraph:
    """Typed components plus dependency edges plus an incident log.

    Construct through the loaders (:func:`load_topology`,
    :func:`build_service_layer`) or :meth:`from_parts`, which enforces
    referential integrity and the per-relation kind rules.
    """

    def __init__(self, components: Mapping[str, Component], edges: Iterable[DependencyEdge],
                 incidents: Iterable[IncidentRecord] = (), diagnostics: Iterable[str] = ()):
        self._components = dict(sorted(components.items()))
        self._edges = tuple(sorted(set(edges)))
        self.incidents = tuple(incidents)
        self.diagnostics = tuple(diagnostics)
        self._check()

    @classmethod
    def from_parts(cls, components: Iterable[Component], edges: Iterable[DependencyEdge],
                   incidents: Iterable[IncidentRecord] = ()) -> "KnowledgeGraph":
        comp: dict[str, Component] = {}
        for c in components:
            if c.id in comp:
                raise IntegrityError(f"duplicate component id {c.id!r}")
            comp[c.id] = c
        return cls(comp, edges, incidents)

    def _check(self) -> None:
        for cid, c in self._components.items():
            if not cid:
                raise IntegrityError("component id must be non-empty")
            if c.kind is Kind.LINK:
                for key in ("capacity_mbps", "prop_latency_ms"):
                    if not float(c.attrs.get(key, 0.0)) > 0:
                        raise IntegrityError(f"link {cid!r} needs positive {key}")
        for e in self._edges:
            for end in (e.src, e.dst):
                if end not in self._components:
                    raise IntegrityError(f"edge {e.src}->{e.dst} references unknown component {end!r}")
            rule = _EDGE_RULES.get(e.relation)
            if rule:
                src_kinds, dst_kinds = rule
                if self._components[e.src].kind not in src_kinds or self._components[e.dst].kind not in dst_kinds:
                    raise IntegrityError(f"{e.relation.value} cannot join {e.src!r} to {e.dst!r}")
        for lid, ends in self.link_endpoints.items():
            if len(ends) != 2:
                raise IntegrityError(f"link {lid!r} must have exactly two router endpoints")

    # -- plain accessors -------------------------------------------------
    @property
    def components(self) -> Mapping[str, Component]:
        return self._components

    @property
    def edges(self) -> tuple[DependencyEdge, ...]:
        return self._edges

    def __contains__(self, cid: str) -> bool:
        return cid in self._components

    def __getitem__(self, cid: str) -> Component:
        try:
            return self._components[cid]
        except KeyError:
            raise LookupFailure(f"unknown component {cid!r}") from None

    def kind_of(self, cid: str) -> Kind:
        return self[cid].kind

    def ids(self, kind: Kind) -> list[str]:
        return [cid for cid, c in self._components.items() if c.kind is kind]

    @property
    def routers(self) -> list[str]:
        return self.ids(Kind.ROUTER)

    @property
    def links(self) -> list[str]:
        return self.ids(Kind.LINK)

    @property
    def flows(self) -> list[str]:
        return self.ids(Kind.FLOW)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __repr__(self) -> str:
        counts = {k.value: len(self.ids(k)) for k in Kind}
        return f"KnowledgeGraph({counts}, edges={len(self._edges)})"

    # -- derived indexes -------------------------------------------------
    @cached_property
    def link_endpoints(self) -> dict[str, tuple[str, str]]:
        ends: dict[str, list[str]] = {lid: [] for lid in self.links}
        for e in self._edges:
            if e.relation is Relation.CONNECTS_TO:
                ends[e.dst].append(e.src)
        return {lid: tuple(sorted(v)) for lid, v in ends.items()}  # type: ignore[misc]

    @cached_property
    def router_links(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {r: [] for r in self.routers}
        for lid, (a, b) in self.link_endpoints.items():
            out[a].append(lid)
            out[b].append(lid)
        return out

    @cached_property
    def _dependents(self) -> dict[str, list[str]]:
        """Component -> components that a failure of it propagates to."""
        dep: dict[str, set[str]] = {cid: set() for cid in self._components}
        for e in self._edges:
            if e.relation in (Relation.DEPENDS_ON, Relation.ROUTES_OVER):
                dep[e.dst].add(e.src)
            elif e.relation is Relation.SHARES_RESOURCE:
                dep[e.dst].add(e.src)
                dep[e.src].add(e.dst)
        for r, lids in self.router_links.items():
            dep[r].update(lids)
        return {k: sorted(v) for k, v in dep.items()}

    @cached_property
    def _hop_adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, set[str]] = {cid: set() for cid in self._components}
        for e in self._edges:
            adj[e.src].add(e.dst)
            adj[e.dst].add(e.src)
        for a, b in self.link_endpoints.values():
            adj[a].add(b)
            adj[b].add(a)
        return {k: sorted(v) for k, v in adj.items()}

    # -- serialization ---------------------------------------------------
    def to_json(self) -> dict:
        return {
            "components": [c.to_json() for c in self._components.values()],
            "edges": [e.to_json() for e in self._edges],
            "incidents": [i.to_json() for i in self.incidents],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def to_edgelist(self) -> str:
        lines = []
        for lid, (a, b) in self.link_endpoints.items():
            attrs = self._components[lid].attrs
            lines.append(f"{a} {b} {float(attrs['capacity_mbps'])!r} {float(attrs['prop_latency_ms'])!r}")
        return "\n".join(lines) + "\n"

    def stats(self) -> dict:
        return {
            "routers": len(self.routers),
            "links": len(self.links),
            "flows": len(self.flows),
            "services": len(self.ids(Kind.SERVICE)),
            "resources": len(self.ids(Kind.RESOURCE)),
            "edges": len(self._edges),
            "connects_to": sum(1 for e in self._edges if e.relation is Relation.CONNECTS_TO),
            "router_components": len(router_components(self)),
        }

    def id_only(self) -> "KnowledgeGraph":
        """Components without any edges (the 'no knowledge graph' ablation).

        Link endpoints are dropped too, so links keep their kind and
        attributes but no longer connect anything.
        """
        g = KnowledgeGraph.__new__(KnowledgeGraph)
        g._components = dict(self._components)
        g._edges = ()
        g.incidents = self.incidents
        g.diagnostics = self.diagnostics
        g.__dict__["link_endpoints"] = {}
        return g


# ---------------------------------------------------------------------------
# loading


def _link_component(lid: str, capacity: float, latency: float, **extra: Any) -> Component:
    attrs = {"capacity_mbps": float(capacity), "prop_latency_ms": float(latency)}
    attrs.update(extra)
    return Component(lid, Kind.LINK, attrs)


class _TopologyBuilder:
    def __init__(self) -> None:
        self.routers: dict[str, dict[str, Any]] = {}
        self.links: dict[str, dict[str, Any]] = {}
        self.ends: dict[str, tuple[str, str]] = {}
        self.notes: list[str] = []

    def warn(self, msg: str) -> None:
        self.notes.append(msg)
        warnings.warn(msg, TopologyWarning, stacklevel=4)

    def add_router(self, name: str, attrs: Mapping[str, Any] | None = None, strict: bool = True) -> None:
        if not name:
            raise TopologyParseError("empty node name")
        if name in self.routers:
            if strict:
                raise IntegrityError(f"duplicate node name {name!r}")
            return
        if "-" in name:
            self.warn(f"node name {name!r} contains '-', link ids touching it are ambiguous")
        a = {"cpu_units": DEFAULT_CPU_UNITS}
        a.update(attrs or {})
        self.routers[name] = a

    def add_link(self, a: str, b: str, capacity: float | None, latency: float | None, where: str) -> None:
        if a == b:
            self.warn(f"{where}: self-loop on {a!r} ignored")
            return
        cap = DEFAULT_CAPACITY_MBPS if capacity is None else capacity
        lat = DEFAULT_LATENCY_MS if latency is None else latency
        if not (cap > 0 and lat > 0):
            raise TopologyParseError(f"{where}: capacity and latency must be positive")
        lid = link_id(a, b)
        if lid in self.links:
            self.warn(f"{where}: parallel link {lid!r} merged (capacities summed)")
            prev = self.links[lid]
            prev["capacity_mbps"] += cap
            prev["prop_latency_ms"] = min(prev["prop_latency_ms"], lat)
            return
        self.links[lid] = {"capacity_mbps": float(cap), "prop_latency_ms": float(lat)}
        self.ends[lid] = tuple(sorted((a, b)))  # type: ignore[assignment]

    def build(self) -> KnowledgeGraph:
        comps = {r: Component(r, Kind.ROUTER, a) for r, a in self.routers.items()}
        edges = []
        for lid, attrs in self.links.items():
            comps[lid] = _link_component(lid, attrs["capacity_mbps"], attrs["prop_latency_ms"])
            for r in self.ends[lid]:
                edges.append(DependencyEdge(r, lid, Relation.CONNECTS_TO))
        kg = KnowledgeGraph(comps, edges, diagnostics=self.notes)
        parts = router_components(kg)
        if len(parts) > 1:
            msg = f"topology has {len(parts)} disconnected router components: " + "; ".join(
                ",".join(p[:5]) + ("..." if len(p) > 5 else "") for p in parts)
            self.warn(msg)
            kg.diagnostics = tuple(self.notes)
        return kg


def _parse_edgelist(text: str) -> KnowledgeGraph:
    b = _TopologyBuilder()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        where = f"line {lineno}"
        if len(tok) == 1:
            b.add_router(tok[0], strict=False)
            continue
        if len(tok) > 4:
            raise TopologyParseError(f"{where}: expected 'SRC DST [capacity_mbps] [latency_ms]', got {raw!r}")
        try:
            nums = [float(x) for x in tok[2:]]
        except ValueError:
            raise TopologyParseError(f"{where}: non-numeric attribute in {raw!r}") from None
        src, dst = tok[0], tok[1]
        b.add_router(src, strict=False)
        b.add_router(dst, strict=False)
        cap = nums[0] if len(nums) > 0 else None
        lat = nums[1] if len(nums) > 1 else None
        b.add_link(src, dst, cap, lat, where)
    return b.build()


_SPEED_UNITS = {"": 1e-6, "K": 1e-3, "M": 1.0, "G": 1e3, "T": 1e6}
_CAPACITY_KEYS = ("capacity_mbps", "capacity", "bandwidth")
_LATENCY_KEYS = ("latency_ms", "prop_latency_ms", "latency", "delay")


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _graphml_capacity(data: Mapping[str, str], where: str) -> float | None:
    try:
        for key in _CAPACITY_KEYS:
            if data.get(key):
                return float(data[key])
        if data.get("LinkSpeedRaw"):
            return float(data["LinkSpeedRaw"]) / 1e6
        if data.get("LinkSpeed"):
            unit = data.get("LinkSpeedUnits", "M").strip().upper()[:1]
            return float(data["LinkSpeed"]) * _SPEED_UNITS.get(unit, 1.0)
    except ValueError:
        raise TopologyParseError(f"{where}: bad capacity value") from None
    return None


def _graphml_latency(data: Mapping[str, str], where: str) -> float | None:
    for key in _LATENCY_KEYS:
        if data.get(key):
            try:
                return float(data[key])
            except ValueError:
                raise TopologyParseError(f"{where}: bad latency value {data[key]!r}") from None
    return None


def _parse_graphml(raw: bytes) -> KnowledgeGraph:
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as exc:
        line, col = exc.position
        raise TopologyParseError(f"malformed GraphML at line {line}, column {col}: {exc}") from None
    keys: dict[str, str] = {}
    for el in root.iter():
        if _strip_ns(el.tag) == "key" and el.get("id"):
            keys[el.get("id")] = el.get("attr.name") or el.get("id")  # type: ignore[index]
    graph = next((el for el in root.iter() if _strip_ns(el.tag) == "graph"), None)
    if graph is None:
        raise TopologyParseError("GraphML document has no <graph> element")

    def data_of(el: ET.Element) -> dict[str, str]:
        out = {}
        for d in el:
            if _strip_ns(d.tag) == "data" and d.get("key"):
                out[keys.get(d.get("key"), d.get("key"))] = (d.text or "").strip()  # type: ignore[arg-type]
        return out

    b = _TopologyBuilder()
    edges = []
    for i, el in enumerate(graph):
        tag = _strip_ns(el.tag)
        if tag == "node":
            nid = el.get("id")
            if not nid:
                raise TopologyParseError(f"<node> element #{i} has no id")
            attrs: dict[str, Any] = {}
            d = data_of(el)
            if d.get("label"):
                attrs["label"] = d["label"]
            b.add_router(nid, attrs)
        elif tag == "edge":
            edges.append((i, el))
    for i, el in edges:
        src, dst = el.get("source"), el.get("target")
        where = f"<edge> element #{i} ({src}->{dst})"
        if not src or not dst:
            raise TopologyParseError(f"{where}: missing source/target")
        for end in (src, dst):
            if end not in b.routers:
                raise TopologyParseError(f"{where}: unknown node {end!r}")
        d = data_of(el)
        b.add_link(src, dst, _graphml_capacity(d, where), _graphml_latency(d, where), where)
    return b.build()


def _parse_json(raw: bytes) -> KnowledgeGraph:
    try:
        doc = json.loads(raw)
        comps = [Component(c["id"], Kind(c["kind"]), dict(c.get("attrs", {}))) for c in doc["components"]]
        edges = [DependencyEdge(e["src"], e["dst"], Relation(e["relation"])) for e in doc["edges"]]
        incidents = [IncidentRecord.from_json(i) for i in doc.get("incidents", [])]
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise TopologyParseError(f"malformed graph JSON: {exc}") from None
    return KnowledgeGraph.from_parts(comps, edges, incidents)


def load_topology(document: bytes | str, format: str) -> KnowledgeGraph:
    """Build a graph from a topology document.

    ``format`` is ``"graphml"``, ``"edgelist"`` or ``"json"`` (the canonical
    serialization produced by :meth:`KnowledgeGraph.dumps`).
    """
    if isinstance(document, str):
        document = document.encode("utf-8")
    if format == "graphml":
        return _parse_graphml(document)
    if format == "edgelist":
        try:
            text = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TopologyParseError(f"edgelist is not UTF-8: {exc}") from None
        return _parse_edgelist(text)
    if format == "json":
        return _parse_json(document)
    raise ValueError(f"unknown topology format {format!r}")


def format_for_path(path: str) -> str:
    lower = path.lower()
    if lower.endswith((".graphml", ".xml")):
        return "graphml"
    if lower.endswith(".json"):
        return "json"
    return "edgelist"


def load_topology_file(path: str, format: str | None = None) -> KnowledgeGraph:
    with open(path, "rb") as fh:
        return load_topology(fh.read(), format or format_for_path(path))


# ---------------------------------------------------------------------------
# service layer


def _require(doc: Mapping[str, Any], key: str, what: str) -> Any:
    if key not in doc:
        raise IntegrityError(f"{what} missing field {key!r}")
    return doc[key]


def build_service_layer(kg: KnowledgeGraph, spec: Mapping[str, Any]) -> KnowledgeGraph:
    """Add flows, services (and optional resources / extra dependencies).

    Flows are routed on the latency-shortest path of the intact topology and
    get a ``RoutesOver`` edge to every link on it. Beyond ``flows`` and
    ``services`` the mapping may carry ``resources`` (``{"id", "shared_by"}``)
    and ``dependencies`` (``{"src", "dst", "relation"}``).
    """
    flows = list(spec.get("flows", []))
    services = list(spec.get("services", []))
    resources = list(spec.get("resources", []))
    deps = list(spec.get("dependencies", []))
    if not (flows or services or resources or deps):
        return kg

    comps = dict(kg.components)
    edges = list(kg.edges)
    routers = set(kg.routers)
    flow_rows = []
    for f in flows:
        fid = str(_require(f, "id", "flow"))
        src, dst = str(_require(f, "src", f"flow {fid}")), str(_require(f, "dst", f"flow {fid}"))
        for r in (src, dst):
            if r not in routers:
                raise IntegrityError(f"flow {fid!r} references unknown router {r!r}")
        demand = float(_require(f, "demand_mbps", f"flow {fid}"))
        prio = int(f.get("priority", 2))
        if demand <= 0 or prio not in (1, 2, 3):
            raise IntegrityError(f"flow {fid!r}: demand must be > 0 and priority in 1..3")
        if fid in comps:
            raise IntegrityError(f"duplicate component id {fid!r}")
        comps[fid] = Component(fid, Kind.FLOW, {"src": src, "dst": dst, "demand_mbps": demand, "priority": prio})
        flow_rows.append((fid, src, dst))

    paths = shortest_paths(kg, [(s, d) for _, s, d in flow_rows])
    for (fid, _, _), path in zip(flow_rows, paths):
        for lid in path:
            edges.append(DependencyEdge(fid, lid, Relation.ROUTES_OVER))

    for s in services:
        sid = str(_require(s, "id", "service"))
        if sid in comps:
            raise IntegrityError(f"duplicate component id {sid!r}")
        comps[sid] = Component(sid, Kind.SERVICE, {})
        for fid in s.get("depends_on", []):
            if fid not in comps:
                raise IntegrityError(f"service {sid!r} depends on unknown component {fid!r}")
            edges.append(DependencyEdge(sid, fid, Relation.DEPENDS_ON))
    for res in resources:
        rid = str(_require(res, "id", "resource"))
        if rid in comps:
            raise IntegrityError(f"duplicate component id {rid!r}")
        comps[rid] = Component(rid, Kind.RESOURCE, dict(res.get("attrs", {})))
        for cid in res.get("shared_by", []):
            cid = canonical_target(str(cid))
            if cid not in comps:
                raise IntegrityError(f"resource {rid!r} shared by unknown component {cid!r}")
            edges.append(DependencyEdge(cid, rid, Relation.SHARES_RESOURCE))
    for d in deps:
        src = canonical_target(str(_require(d, "src", "dependency")))
        dst = canonical_target(str(_require(d, "dst", "dependency")))
        for c in (src, dst):
            if c not in comps:
                raise IntegrityError(f"dependency references unknown component {c!r}")
        edges.append(DependencyEdge(src, dst, Relation(d.get("relation", "DependsOn"))))
    return KnowledgeGraph(comps, edges, kg.incidents, kg.diagnostics)


def with_incidents(kg: KnowledgeGraph, incidents: Iterable[IncidentRecord]) -> KnowledgeGraph:
    return KnowledgeGraph(dict(kg.components), kg.edges, tuple(kg.incidents) + tuple(incidents), kg.diagnostics)


# ---------------------------------------------------------------------------
# queries


def dependency_closure(kg: KnowledgeGraph, cid: str) -> frozenset[str]:
    """Everything a failure of ``cid`` can propagate to, ``cid`` included.

    Follows ``DependsOn`` and ``RoutesOver`` edges backwards (from the
    depended-on component to its dependants), ``SharesResource`` edges in
    both directions, and router -> attached links.
    """
    kg[cid]
    dep = kg._dependents
    seen = {cid}
    queue = deque([cid])
    while queue:
        for nxt in dep[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return frozenset(seen)


def reachable(kg: KnowledgeGraph, a: str, b: str, failed: Iterable[str] = ()) -> bool:
    """True iff routers ``a`` and ``b`` are joined by up links/routers."""
    for r in (a, b):
        if kg.kind_of(r) is not Kind.ROUTER:
            raise TypeError(f"{r!r} is not a router")
    failed = set(failed)
    if a in failed or b in failed:
        return False
    seen = {a}
    queue = deque([a])
    ends = kg.link_endpoints
    while queue:
        u = queue.popleft()
        if u == b:
            return True
        for lid in kg.router_links[u]:
            if lid in failed:
                continue
            x, y = ends[lid]
            v = y if x == u else x
            if v not in seen and v not in failed:
                seen.add(v)
                queue.append(v)
    return False


def router_components(kg: KnowledgeGraph) -> list[list[str]]:
    seen: set[str] = set()
    parts = []
    for r in kg.routers:
        if r in seen:
            continue
        part = []
        queue = deque([r])
        seen.add(r)
        while queue:
            u = queue.popleft()
            part.append(u)
            for lid in kg.router_links[u]:
                for v in kg.link_endpoints[lid]:
                    if v not in seen:
                        seen.add(v)
                        queue.append(v)
        parts.append(sorted(part))
    return parts


def extract_subgraph(kg: KnowledgeGraph, seeds: Iterable[str], radius: int) -> KnowledgeGraph:
    """Induced subgraph of everything within ``radius`` hops of a seed.

    Hops are undirected and count router-router adjacency through a link as
    one hop, so a router's neighbours and the links to them are both one
    hop away. A link is only kept together with its endpoints if both are
    in range; otherwise it appears as a bare component.
    """
    if not 0 <= radius <= MAX_RADIUS:
        raise ValueError(f"radius must be in [0, {MAX_RADIUS}]")
    seeds = sorted(set(seeds))
    for s in seeds:
        kg[s]
    dist = {s: 0 for s in seeds}
    queue = deque(seeds)
    adj = kg._hop_adjacency
    while queue:
        u = queue.popleft()
        if dist[u] == radius:
            continue
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    keep = set(dist)
    comps = {cid: kg.components[cid] for cid in sorted(keep)}
    edges = [e for e in kg.edges if e.src in keep and e.dst in keep]
    # a link whose endpoints were not both kept cannot carry ConnectsTo edges
    partial = {lid for lid in keep if kg.kind_of(lid) is Kind.LINK
               and not all(r in keep for r in kg.link_endpoints[lid])}
    if partial:
        edges = [e for e in edges if not (e.relation is Relation.CONNECTS_TO and e.dst in partial)]
    sub = KnowledgeGraph.__new__(KnowledgeGraph)
    sub._components = comps
    sub._edges = tuple(sorted(edges))
    sub.incidents = tuple(i for i in kg.incidents if canonical_target(i.target) in keep)
    sub.diagnostics = ()
    sub.__dict__["link_endpoints"] = {lid: kg.link_endpoints[lid] for lid in comps
                                      if kg.kind_of(lid) is Kind.LINK and lid not in partial}
    return sub


def shortest_paths(kg: KnowledgeGraph, pairs: list[tuple[str, str]]) -> list[list[str]]:
    """Latency-shortest link paths on the intact topology (lexicographic ties)."""
    out = []
    ends = kg.link_endpoints
    comps = kg.components
    cache: dict[str, dict[str, float]] = {}
    for src, dst in pairs:
        if dst not in cache:
            dist = {dst: 0.0}
            heap = [(0.0, dst)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist.get(u, float("inf")):
                    continue
                for lid in kg.router_links[u]:
                    x, y = ends[lid]
                    v = y if x == u else x
                    nd = d + float(comps[lid].attrs["prop_latency_ms"])
                    if nd < dist.get(v, float("inf")):
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
            cache[dst] = dist
        dist = cache[dst]
        if src not in dist:
            out.append([])
            continue
        path, u = [], src
        while u != dst:
            best = None
            for lid in kg.router_links[u]:
                x, y = ends[lid]
                v = y if x == u else x
                w = float(comps[lid].attrs["prop_latency_ms"])
                if v in dist and dist[v] + w == dist[u] and (best is None or v < best[0]):
                    best = (v, lid)
            assert best is not None
            u = best[0]
            path.append(best[1])
        out.append(path)
    return out
