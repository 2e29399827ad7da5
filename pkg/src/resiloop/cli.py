"""Command-line entry point: ``resiloop <command> [options]``.

Exit codes: 0 success, 1 operational error, 2 invalid input or scenario.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Sequence

from . import mitigate
from .errors import (CampaignError, ConfigurationError, GenerationError, IntegrityError, LookupFailure,
                     OrderingError, SchemaError, TopologyParseError)
from .generator import (Constraints, GeneratorContext, HttpCompletionClient, LlmClientConfig, propose)
from .kgraph import IncidentRecord, KnowledgeGraph, build_service_layer, load_topology_file, with_incidents
from .loop import Ablations, AblationReport, CampaignReport, LoopConfig, run_ablation_suite, run_campaign
from .scenario import Scenario, ScenarioClass, canonicalize, dumps_scenario, load_scenarios, validate
from .twin import SimulationConfig, TrafficMatrix, run
from .twin.model import _finite

log = logging.getLogger("resiloop")

EXIT_OK, EXIT_OPERATIONAL, EXIT_INVALID = 0, 1, 2
_INVALID_INPUT = (TopologyParseError, SchemaError, IntegrityError, OrderingError, LookupFailure,
                  ConfigurationError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2; usage errors are operational here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _dumps(obj: Any) -> str:
    return json.dumps(_finite(obj), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# configuration

_PATH_KEYS = ("topology", "services", "traffic", "incidents")


@dataclass
class CliConfig:
    paths: dict[str, str | None] = field(default_factory=dict)
    sim: dict[str, Any] = field(default_factory=dict)
    loop: dict[str, Any] = field(default_factory=dict)
    llm: dict[str, Any] = field(default_factory=dict)
    out: str | None = None
    seed: int = 0
    verbose: int = 0

    def sim_config(self) -> SimulationConfig:
        return SimulationConfig(**{**self.sim, "seed": self.seed})

    def llm_client(self) -> HttpCompletionClient:
        if not self.llm.get("endpoint"):
            raise ConfigurationError("--generator llm needs --llm-endpoint (or llm.endpoint in the config)")
        known = {"endpoint", "model", "api_key_env", "auth_header", "timeout_s", "max_in_flight"}
        return HttpCompletionClient(LlmClientConfig(**{k: v for k, v in self.llm.items() if k in known}))


def _load_config_file(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigurationError("config file must hold a JSON object of dotted keys")
    return doc


def build_config(args: argparse.Namespace) -> CliConfig:
    flat: dict[str, Any] = _load_config_file(args.config) if args.config else {}
    flags = {
        "topology": args.topology, "services": args.services, "traffic": args.traffic,
        "incidents": args.incidents, "seed": args.seed, "out": args.out,
        "loop.generator": getattr(args, "generator", None), "loop.class": getattr(args, "scenario_class", None),
        "loop.iterations": getattr(args, "iterations", None),
        "loop.ablate": getattr(args, "ablate", None) or None,
        "llm.endpoint": getattr(args, "llm_endpoint", None), "llm.model": getattr(args, "llm_model", None),
    }
    for key, value in flags.items():
        if value is not None:
            flat[key] = value
    cfg = CliConfig(verbose=args.verbose)
    for key, value in flat.items():
        head, _, rest = key.partition(".")
        if key in _PATH_KEYS:
            cfg.paths[key] = value
        elif key == "seed":
            cfg.seed = int(value)
        elif key == "out":
            cfg.out = value
        elif head in ("sim", "loop", "llm") and rest:
            getattr(cfg, head)[rest] = value
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    for key, path in cfg.paths.items():
        if path and not os.path.exists(path):
            raise ConfigurationError(f"{key} file {path!r} does not exist")
    return cfg


def load_inputs(cfg: CliConfig) -> tuple[KnowledgeGraph, TrafficMatrix]:
    topo = cfg.paths.get("topology")
    if not topo:
        raise ConfigurationError("--topology is required")
    kg = load_topology_file(topo)
    spec: dict[str, Any] = {}
    if cfg.paths.get("services"):
        with open(cfg.paths["services"], encoding="utf-8") as fh:
            spec = json.load(fh)
    tm = None
    if cfg.paths.get("traffic"):
        with open(cfg.paths["traffic"], encoding="utf-8") as fh:
            tm = TrafficMatrix.from_csv(fh.read())
        if not spec.get("flows"):
            spec = {**spec, "flows": tm.service_spec()["flows"]}
    kg = build_service_layer(kg, spec)
    if cfg.paths.get("incidents"):
        kg = with_incidents(kg, read_incidents(cfg.paths["incidents"]))
    if tm is None:
        tm = TrafficMatrix.from_kg(kg)
    tm.check_against(kg)
    return kg, tm


def read_incidents(path: str) -> list[IncidentRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(IncidentRecord.from_json(json.loads(line)))
                except json.JSONDecodeError as exc:
                    raise TopologyParseError(f"{path}:{lineno}: {exc.msg}") from None
    return out


def read_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        scenarios = load_scenarios(fh.read())
    if len(scenarios) != 1:
        raise SchemaError("<scenario>", f"expected one scenario in {path}, found {len(scenarios)}")
    return canonicalize(scenarios[0])


def loop_config(cfg: CliConfig) -> LoopConfig:
    lc = dict(cfg.loop)
    ablate = lc.pop("ablate", None) or []
    if isinstance(ablate, str):
        ablate = [ablate]
    kwargs: dict[str, Any] = {"seed": cfg.seed, "sim": cfg.sim_config(), "ablations": Ablations.from_names(ablate)}
    for key, value in lc.items():
        if key == "class":
            kwargs["scenario_class"] = ScenarioClass(value) if value else None
        elif key in ("iterations", "k", "max_events"):
            kwargs[key] = int(value)
        elif key == "weights":
            kwargs[key] = tuple(value)
        elif key in ("generator", "mitigation", "suite"):
            if key != "suite":
                kwargs[key] = value
        else:
            raise ConfigurationError(f"unknown loop option {key!r}")
    return LoopConfig(**kwargs)


# ---------------------------------------------------------------------------
# output


def _write(out_dir: str | None, name: str, text: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _summary_text(report: CampaignReport | AblationReport) -> str:
    lines = []
    if isinstance(report, AblationReport):
        lines.append(f"seed: {report.seed}")
        norm = report.normalized()
        for name, c in report.campaigns.items():
            s = c.summary()
            lines.append(f"[{name}] normalized_score={norm[name]:.4f} validity_rate={s['validity_rate']:.4f} "
                         f"mean_impact={s['mean_impact']:.4f} max_impact={s['max_impact']:.4f} "
                         f"mean_cascade_depth={s['mean_cascade_depth']:.4f} "
                         f"mean_effectiveness={s['mean_effectiveness']:.4f}")
    else:
        s = report.summary()
        lines.append(f"seed: {s['seed']}")
        lines.append(f"variant: {s['variant']}")
        lines.append(f"iterations: {s['iterations']}")
        for key in ("validity_rate", "mean_impact", "max_impact", "mean_cascade_depth", "mean_effectiveness"):
            lines.append(f"{key}: {s[key]:.6f}")
    return "\n".join(lines) + "\n"


def emit_report(report: CampaignReport | AblationReport, out_dir: str) -> list[str]:
    """Write the campaign (or ablation suite) files; returns the file names written."""
    written = []

    def put(name: str, text: str) -> None:
        _write(out_dir, name, text)
        written.append(name)

    put("campaign.json", _dumps(report.to_json()))
    if isinstance(report, AblationReport):
        put("ablation.csv", report.to_csv())
        full = report.campaigns["full"]
        put("iterations.csv", full.iterations_csv())
        put("plot.csv", full.plot_csv())
        for name, c in report.campaigns.items():
            put(f"iterations_{name}.csv", c.iterations_csv())
    else:
        put("iterations.csv", report.iterations_csv())
        put("plot.csv", report.plot_csv())
    put("summary.txt", _summary_text(report))
    return written


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: CliConfig, args: argparse.Namespace) -> int:
    kg, _ = load_inputs(cfg)
    for d in kg.diagnostics:
        log.warning("%s", d)
    _write(cfg.out, "graph.json", kg.dumps() + "\n")
    stats = _dumps(kg.stats())
    if cfg.out is None:
        sys.stderr.write(stats)
    else:
        _write(cfg.out, "stats.json", stats)
    return EXIT_OK


def cmd_validate(cfg: CliConfig, args: argparse.Namespace) -> int:
    kg, _ = load_inputs(cfg)
    s = read_scenario(args.scenario)
    sim = cfg.sim_config()
    report = validate(s, kg, horizon_s=sim.horizon_s)
    _write(cfg.out, "validation.json", _dumps(report.to_json()))
    return EXIT_OK if report.valid else EXIT_INVALID


def cmd_generate(cfg: CliConfig, args: argparse.Namespace) -> int:
    kg, _ = load_inputs(cfg)
    lc = loop_config(cfg)
    ctx = GeneratorContext(kg.id_only() if lc.ablations.disable_kg else kg,
                           Constraints(lc.scenario_class, lc.max_events, lc.sim.horizon_s,
                                       not lc.ablations.disable_causal), (), cfg.seed, lc.k)
    client = cfg.llm_client() if lc.generator == "llm" else None
    s = propose(lc.generator, ctx, incidents=kg.incidents, client=client)
    _write(cfg.out, "scenario.json", dumps_scenario(s) + "\n")
    return EXIT_OK


def _checked_scenario(cfg: CliConfig, kg: KnowledgeGraph, path: str) -> Scenario | None:
    s = read_scenario(path)
    report = validate(s, kg, horizon_s=cfg.sim_config().horizon_s)
    if not report.valid:
        sys.stderr.write(_dumps(report.to_json()))
        return None
    return s


def cmd_simulate(cfg: CliConfig, args: argparse.Namespace) -> int:
    kg, tm = load_inputs(cfg)
    s = _checked_scenario(cfg, kg, args.scenario)
    if s is None:
        return EXIT_INVALID
    result = run(s, kg, tm, cfg.sim_config())
    _write(cfg.out, "result.json", result.dumps() + "\n")
    if cfg.out is not None:
        _write(cfg.out, "kpi.csv", result.samples.to_csv())
    return EXIT_OK


def cmd_mitigate(cfg: CliConfig, args: argparse.Namespace) -> int:
    kg, tm = load_inputs(cfg)
    s = _checked_scenario(cfg, kg, args.scenario)
    if s is None:
        return EXIT_INVALID
    reports = mitigate.evaluate(s, kg, tm, cfg.sim_config())
    _write(cfg.out, "mitigation.json", _dumps([r.to_json() for r in reports]))
    if cfg.out is not None:
        _write(cfg.out, "mitigation.csv", mitigate.reports_to_csv(reports))
    return EXIT_OK


def cmd_campaign(cfg: CliConfig, args: argparse.Namespace) -> int:
    kg, tm = load_inputs(cfg)
    lc = loop_config(cfg)
    suite = bool(args.suite or cfg.loop.get("suite"))
    if lc.generator == "llm":
        factory = cfg.llm_client
    else:
        factory = None
    if suite:
        report: CampaignReport | AblationReport = run_ablation_suite(lc, kg, tm, client_factory=factory)
    else:
        report = run_campaign(lc, kg, tm, client=factory() if factory else None)
    if cfg.out is None:
        sys.stdout.write(_summary_text(report))
    else:
        emit_report(report, cfg.out)
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "validate": cmd_validate, "generate": cmd_generate,
            "simulate": cmd_simulate, "mitigate": cmd_mitigate, "campaign": cmd_campaign}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of dotted keys (flags override it)")
    common.add_argument("--topology", help="GraphML, edgelist or graph JSON file")
    common.add_argument("--services", help="services JSON (flows, dependencies, resources)")
    common.add_argument("--traffic", help="traffic matrix CSV (flow_id,src,dst,demand_mbps,priority)")
    common.add_argument("--incidents", help="newline-delimited incident records")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--generator", choices=("rule", "replay", "llm"))
    gen.add_argument("--class", dest="scenario_class", choices=[c.value for c in ScenarioClass])
    gen.add_argument("--ablate", action="append", choices=("kg", "causal", "feedback"))
    gen.add_argument("--llm-endpoint")
    gen.add_argument("--llm-model")

    p = _Parser(prog="resiloop", description="Closed-loop network resilience testing in a digital twin.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("ingest", parents=[common], help="load topology/services, emit canonical graph JSON")
    for name in ("validate", "simulate", "mitigate"):
        sp = sub.add_parser(name, parents=[common], help=f"{name} a scenario file")
        sp.add_argument("scenario")
    sub.add_parser("generate", parents=[common, gen], help="emit one scenario")
    cp = sub.add_parser("campaign", parents=[common, gen], help="run the closed loop")
    cp.add_argument("--iterations", type=int)
    cp.add_argument("--suite", action="store_true", help="run the four-variant ablation suite")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"resiloop: {exc}\n")
        return EXIT_OPERATIONAL
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_OPERATIONAL
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg, args)
    except _INVALID_INPUT as exc:
        sys.stderr.write(f"resiloop: invalid input: {exc}\n")
        return EXIT_INVALID
    except ValueError as exc:
        sys.stderr.write(f"resiloop: invalid input: {exc}\n")
        return EXIT_INVALID
    except (GenerationError, CampaignError, OSError) as exc:
        sys.stderr.write(f"resiloop: {exc}\n")
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
