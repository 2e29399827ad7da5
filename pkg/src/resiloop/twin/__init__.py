"""Deterministic event-driven network twin."""
from .engine import (NetworkIndex, NetworkState, OverloadTracker, apply_event, assign_flows,
                     cascade_check, cascade_depth, compute_routes, run)
from .kernels import BACKEND
from .model import (ACCOUNTING_COLUMNS, CSV_HEADER, KPI_COLUMNS, FlowOutcome, KpiSample, KpiSeries,
                    SimulationConfig, SimulationResult, TrafficFlow, TrafficMatrix, router_count)

__all__ = [
    "ACCOUNTING_COLUMNS", "BACKEND", "CSV_HEADER", "FlowOutcome", "KPI_COLUMNS", "KpiSample", "KpiSeries",
    "NetworkIndex", "NetworkState", "OverloadTracker", "SimulationConfig", "SimulationResult",
    "TrafficFlow", "TrafficMatrix", "apply_event", "assign_flows", "cascade_check", "cascade_depth",
    "compute_routes", "router_count", "run",
]
