"""Deterministic prompt rendering for the language-model backend."""
from __future__ import annotations

import json

from ..scenario import MAX_EVENTS, RULES_TEXT
from .context import GeneratorContext

SCHEMA_EXAMPLE = '{"event_type": "fiber_link_failure", "target": "B-C", "timestamp": 245.8, "severity": "high"}'

SCHEMA_TEXT = (
    "Each event is a JSON object with fields:\n"
    '  event_type: one of "fiber_link_failure", "router_overload", "node_failure", '
    '"traffic_spike", "cascading_trip"\n'
    "  target: a component id from the graph (links are written \"A-B\" with endpoints sorted)\n"
    "  timestamp: seconds since scenario start, >= 0\n"
    '  severity: "low", "medium" or "high"\n'
    "  cause: optional index of an earlier event in the same scenario that triggers this one\n"
    "  params: optional object, e.g. {\"spike_multiplier\": 5}\n"
)

OUTPUT_TEXT = 'Reply with exactly one JSON object: {"id": "<name>", "events": [<event>, ...]}.'


def render_prompt(ctx: GeneratorContext) -> str:
    c = ctx.constraints
    parts = [
        "Generate one adversarial failure scenario for the network described below.",
        "",
        "## Graph",
        ctx.subgraph.dumps(),
        "",
        "## Rules",
        RULES_TEXT,
        "",
        "## Event schema",
        SCHEMA_TEXT + "Example event:\n" + SCHEMA_EXAMPLE,
        "",
        "## Constraints",
        json.dumps(c.to_json(), sort_keys=True),
        f"Use at most {min(c.max_events, MAX_EVENTS)} events."
        + ("" if c.causal else " Do not set 'cause' on any event."),
    ]
    if ctx.feedback:
        parts += ["", "## High-impact scenarios so far"]
        ranked = sorted(enumerate(ctx.feedback), key=lambda p: (-p[1].impact, p[0]))
        for _, ex in ranked:
            parts.append(f"- impact={ex.impact:.4f} {ex.scenario_digest}")
    parts += ["", "## Output", OUTPUT_TEXT]
    return "\n".join(parts) + "\n"
