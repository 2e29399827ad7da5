"""Twin data types: configuration, traffic matrix, KPI samples and results."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from ..errors import ConfigurationError, IntegrityError, TopologyParseError
from ..kgraph import Kind, KnowledgeGraph
from ..scenario import FailureEvent, serialize_event


@dataclass(frozen=True)
class SimulationConfig:
    """Every physics constant of the twin, in one place.

    Severity tables map ``low/medium/high``. ``fiber_capacity_factor`` of 0
    means the link goes down.
    """

    horizon_s: float = 3600.0
    sample_interval_s: float = 1.0
    cascade_threshold: float = 1.0
    cascade_grace_s: float = 5.0
    latency_mult_cap: float = 20.0
    detect_delay_ms: float = 50.0
    per_hop_update_ms: float = 10.0
    seed: int = 0
    fiber_capacity_factor: Mapping[str, float] = field(
        default_factory=lambda: {"low": 0.8, "medium": 0.5, "high": 0.0})
    overload_cpu_factor: Mapping[str, float] = field(
        default_factory=lambda: {"low": 0.5, "medium": 1.0, "high": 2.0})
    spike_multiplier: Mapping[str, float] = field(
        default_factory=lambda: {"low": 2.0, "medium": 5.0, "high": 10.0})
    impacted_loss: float = 0.01
    impacted_latency_ratio: float = 1.2
    cpu_trip: bool = False
    cpu_trip_ratio: float = 2.0

    def __post_init__(self) -> None:
        for name in ("horizon_s", "sample_interval_s", "cascade_grace_s", "latency_mult_cap",
                     "detect_delay_ms", "per_hop_update_ms", "impacted_latency_ratio", "cpu_trip_ratio"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.cascade_threshold < 0.5:
            raise ConfigurationError("cascade_threshold must be >= 0.5")
        if self.latency_mult_cap < 1:
            raise ConfigurationError("latency_mult_cap must be >= 1")

    def replace(self, **overrides: Any) -> "SimulationConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(overrides)
        return SimulationConfig(**data)

    def to_json(self) -> dict:
        return {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class TrafficFlow:
    flow_id: str
    src: str
    dst: str
    demand_mbps: float
    priority: int = 2


_CSV_HEADER = ["flow_id", "src", "dst", "demand_mbps", "priority"]


class TrafficMatrix:
    """Ordered, id-unique collection of flow demands."""

    def __init__(self, flows: Iterable[TrafficFlow] = ()):
        self.flows: tuple[TrafficFlow, ...] = tuple(flows)
        seen = set()
        for f in self.flows:
            if f.flow_id in seen:
                raise IntegrityError(f"duplicate flow id {f.flow_id!r}")
            seen.add(f.flow_id)
            if not f.demand_mbps > 0:
                raise IntegrityError(f"flow {f.flow_id!r}: demand must be positive")
            if f.priority not in (1, 2, 3):
                raise IntegrityError(f"flow {f.flow_id!r}: priority must be 1, 2 or 3")
            if f.src == f.dst:
                raise IntegrityError(f"flow {f.flow_id!r}: src and dst must differ")

    def __len__(self) -> int:
        return len(self.flows)

    def __iter__(self) -> Iterator[TrafficFlow]:
        return iter(self.flows)

    def check_against(self, kg: KnowledgeGraph) -> None:
        routers = set(kg.routers)
        for f in self.flows:
            for r in (f.src, f.dst):
                if r not in routers:
                    raise IntegrityError(f"traffic flow {f.flow_id!r} references unknown router {r!r}")

    @classmethod
    def from_kg(cls, kg: KnowledgeGraph) -> "TrafficMatrix":
        out = []
        for fid in kg.flows:
            a = kg[fid].attrs
            out.append(TrafficFlow(fid, a["src"], a["dst"], float(a["demand_mbps"]), int(a.get("priority", 2))))
        return cls(out)

    @classmethod
    def from_csv(cls, text: str) -> "TrafficMatrix":
        rows = []
        reader = csv.reader(io.StringIO(text))
        for lineno, row in enumerate(reader, 1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if [c.strip() for c in row] == _CSV_HEADER:
                continue
            if len(row) not in (4, 5):
                raise TopologyParseError(f"traffic line {lineno}: expected {','.join(_CSV_HEADER)}")
            try:
                prio = int(row[4]) if len(row) == 5 and row[4].strip() else 2
                rows.append(TrafficFlow(row[0].strip(), row[1].strip(), row[2].strip(), float(row[3]), prio))
            except ValueError:
                raise TopologyParseError(f"traffic line {lineno}: bad number in {row!r}") from None
        return cls(rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_CSV_HEADER)
        for f in self.flows:
            w.writerow([f.flow_id, f.src, f.dst, repr(float(f.demand_mbps)), f.priority])
        return buf.getvalue()

    def service_spec(self) -> dict:
        return {"flows": [{"id": f.flow_id, "src": f.src, "dst": f.dst, "demand_mbps": f.demand_mbps,
                           "priority": f.priority} for f in self.flows]}


@dataclass(frozen=True)
class KpiSample:
    t: float
    mean_latency_ms: float
    p95_latency_ms: float
    loss_fraction: float
    max_utilization: float
    mean_utilization: float
    impacted_nodes: float

    def to_json(self) -> dict:
        return asdict(self)


KPI_COLUMNS = ("mean_latency_ms", "p95_latency_ms", "loss_fraction", "max_utilization",
               "mean_utilization", "impacted_nodes")
ACCOUNTING_COLUMNS = ("offered_mbps", "delivered_mbps", "dropped_mbps")
CSV_HEADER = ("t", "mean_latency_ms", "p95_latency_ms", "loss_fraction", "max_util", "mean_util", "impacted_nodes")


class KpiSeries:
    """Column-oriented KPI time series; indexing yields :class:`KpiSample`."""

    def __init__(self, t: np.ndarray, columns: Mapping[str, np.ndarray]):
        self.t = t
        self.columns = dict(columns)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> KpiSample:
        return KpiSample(float(self.t[i]), *(float(self.columns[c][i]) for c in KPI_COLUMNS))

    def __iter__(self) -> Iterator[KpiSample]:
        for i in range(len(self.t)):
            yield self[i]

    def column(self, name: str) -> np.ndarray:
        return self.t if name == "t" else self.columns[name]

    def window_mean(self, t0: float) -> KpiSample:
        """Mean of every KPI over samples with ``t >= t0`` (last sample if none)."""
        mask = self.t >= t0
        if not mask.any():
            mask = self.t == self.t[-1]
        return KpiSample(float(t0), *(float(self.columns[c][mask].mean()) for c in KPI_COLUMNS))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        cols = [self.t] + [self.columns[c] for c in KPI_COLUMNS]
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass
class FlowOutcome:
    delivered_mbps: float
    dropped_mbps: float
    path: list[str]


@dataclass
class SimulationResult:
    samples: KpiSeries
    baseline: KpiSample
    events: list[FailureEvent]
    n_primary: int
    reroute_convergence: dict[int, float]
    cascade_depth: int
    per_flow: dict[str, FlowOutcome]
    link_utilization: dict[str, float]
    down: list[str]
    total_routers: int
    first_event_s: float
    warnings: list[str] = field(default_factory=list)

    @property
    def induced_events(self) -> list[FailureEvent]:
        return self.events[self.n_primary:]

    @property
    def primary_events(self) -> list[FailureEvent]:
        return self.events[:self.n_primary]

    @property
    def final(self) -> KpiSample:
        return self.samples[len(self.samples) - 1]

    def to_json(self) -> dict:
        return {
            "baseline": self.baseline.to_json(),
            "cascade_depth": self.cascade_depth,
            "down": list(self.down),
            "events": [serialize_event(e) for e in self.events],
            "first_event_s": self.first_event_s,
            "induced_events": [serialize_event(e) for e in self.induced_events],
            "link_utilization": dict(sorted(self.link_utilization.items())),
            "n_primary": self.n_primary,
            "per_flow": {k: asdict(v) for k, v in sorted(self.per_flow.items())},
            "reroute_convergence_ms": {str(k): v for k, v in sorted(self.reroute_convergence.items())},
            "samples": {"t": self.samples.t.tolist(),
                        **{c: self.samples.columns[c].tolist() for c in KPI_COLUMNS + ACCOUNTING_COLUMNS}},
            "total_routers": self.total_routers,
            "warnings": list(self.warnings),
        }

    def dumps(self) -> str:
        return json.dumps(_finite(self.to_json()), sort_keys=True, separators=(",", ":"))


def _finite(obj: Any) -> Any:
    """Replace non-finite floats (strict JSON has no Infinity) by None."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def router_count(kg: KnowledgeGraph) -> int:
    return sum(1 for c in kg.components.values() if c.kind is Kind.ROUTER)
