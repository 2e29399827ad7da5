"""Scenario generator backends: rule templates, historical replay, language model."""
from __future__ import annotations

from typing import Sequence

from ..errors import ConfigurationError
from ..kgraph import IncidentRecord
from ..scenario import Scenario
from .context import DEFAULT_K, Constraints, FeedbackExemplar, GeneratorContext
from .llm import (CompletionClient, HttpCompletionClient, LlmClientConfig, ScriptedClient, TransportError,
                  extract_json, propose_llm)
from .prompt import SCHEMA_EXAMPLE, render_prompt
from .replay import propose_replay
from .rules import class_weights, infer_class, propose_rule_based

BACKENDS = ("rule", "replay", "llm")


def propose(backend: str, ctx: GeneratorContext, *, incidents: Sequence[IncidentRecord] = (),
            client: CompletionClient | None = None) -> Scenario:
    if backend == "rule":
        return propose_rule_based(ctx)
    if backend == "replay":
        return propose_replay(list(incidents), ctx)
    if backend == "llm":
        if client is None:
            raise ConfigurationError("llm backend needs a client")
        return propose_llm(ctx, client)
    raise ConfigurationError(f"unknown generator backend {backend!r}")


__all__ = [
    "BACKENDS", "DEFAULT_K", "CompletionClient", "Constraints", "FeedbackExemplar", "GeneratorContext",
    "HttpCompletionClient", "LlmClientConfig", "SCHEMA_EXAMPLE", "ScriptedClient", "TransportError",
    "class_weights", "extract_json", "infer_class", "propose", "propose_llm", "propose_replay",
    "propose_rule_based", "render_prompt",
]
