"""Language-model backend: prompt, parse, validate, repair, fall back."""
from __future__ import annotations

import json
import logging
import os
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Any, Protocol, Sequence

from ..errors import GenerationError, OrderingError, ResiloopError, SchemaError
from ..scenario import Scenario, canonicalize, parse_event, validate
from .context import GeneratorContext
from .prompt import render_prompt
from .rules import infer_class, propose_rule_based

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
SYSTEM_PROMPT = "You are a network failure-scenario generator. Answer with JSON only."


class TransportError(ResiloopError):
    """The completion service could not be reached or answered garbage."""


class CompletionClient(Protocol):
    def complete(self, messages: list[dict[str, str]]) -> str: ...


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str
    model: str = "default"
    api_key_env: str = "RESILOOP_LLM_API_KEY"
    auth_header: str = "Authorization"
    timeout_s: float = 30.0
    max_in_flight: int = 2


class HttpCompletionClient:
    """Minimal chat-completion client over urllib.

    At most ``max_in_flight`` requests run at once across threads sharing
    the client.
    """

    def __init__(self, config: LlmClientConfig):
        self.config = config
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))

    def _headers(self) -> dict[str, str]:
        h = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            h[self.config.auth_header] = f"Bearer {key}" if self.config.auth_header == "Authorization" else key
        return h

    def complete(self, messages: list[dict[str, str]]) -> str:
        body = json.dumps({"model": self.config.model, "messages": messages, "temperature": 0}).encode()
        headers = self._headers()
        if log.isEnabledFor(logging.DEBUG):
            shown = {k: ("<redacted>" if k == self.config.auth_header else v) for k, v in headers.items()}
            log.debug("POST %s headers=%s body=%s", self.config.endpoint, shown, body.decode())
        req = urllib.request.Request(self.config.endpoint, data=body, headers=headers, method="POST")
        with self._slots:
            try:
                with urllib.request.urlopen(req, timeout=self.config.timeout_s) as resp:
                    raw = resp.read().decode("utf-8", "replace")
            except (urllib.error.URLError, OSError, ValueError) as exc:
                raise TransportError(f"completion request failed: {exc}") from exc
        log.debug("response %s", raw)
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError:
            return raw
        if isinstance(doc, dict):
            try:
                return doc["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                for key in ("content", "text", "output"):
                    if isinstance(doc.get(key), str):
                        return doc[key]
        return raw


class ScriptedClient:
    """Offline stand-in that replays canned responses in order.

    An item that is an exception instance is raised instead of returned.
    Every request is recorded in ``calls``.
    """

    def __init__(self, responses: Sequence[str | BaseException]):
        self.responses = list(responses)
        self.calls: list[list[dict[str, str]]] = []

    def complete(self, messages: list[dict[str, str]]) -> str:
        self.calls.append([dict(m) for m in messages])
        if len(self.calls) > len(self.responses):
            raise TransportError("script exhausted")
        item = self.responses[len(self.calls) - 1]
        if isinstance(item, BaseException):
            raise item
        return item


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)


def extract_json(text: str) -> Any | None:
    """First decodable JSON object/array in ``text`` (fenced blocks first)."""
    candidates = [m.group(1) for m in _FENCE.finditer(text)] + [text]
    dec = json.JSONDecoder()
    for chunk in candidates:
        chunk = chunk.strip()
        for i, ch in enumerate(chunk):
            if ch in "{[":
                try:
                    doc, _ = dec.raw_decode(chunk, i)
                except json.JSONDecodeError:
                    continue
                if isinstance(doc, (dict, list)):
                    return doc
    return None


def scenario_from_doc(doc: Any, default_id: str) -> Scenario:
    if isinstance(doc, dict) and "events" in doc:
        events = doc["events"]
        if not isinstance(events, list):
            raise SchemaError("events", "must be a list")
        return Scenario(str(doc.get("id", default_id)), [parse_event(e) for e in events], {})
    if isinstance(doc, list):
        return Scenario(default_id, [parse_event(e) for e in doc], {})
    return Scenario(default_id, [parse_event(doc)], {})


def _repair_message(problems: Sequence[str]) -> str:
    return ("The scenario was rejected:\n" + "\n".join(f"- {p}" for p in problems)
            + "\nReturn a corrected scenario as one JSON object.")


def propose_llm(ctx: GeneratorContext, client: CompletionClient, max_attempts: int = MAX_ATTEMPTS) -> Scenario:
    """Ask the model, validate, and re-prompt with the violations on failure.

    Falls back to the rule-based backend (tagged ``rule_fallback``) when every
    attempt fails. Never makes more than ``max_attempts`` (<= 3) calls.
    """
    max_attempts = max(1, min(max_attempts, MAX_ATTEMPTS))
    c = ctx.constraints
    messages = [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": render_prompt(ctx)}]
    errors: list[str] = []
    for attempt in range(1, max_attempts + 1):
        try:
            text = client.complete(messages)
        except (TransportError, TimeoutError, OSError) as exc:
            errors.append(f"attempt {attempt}: transport: {exc}")
            continue
        messages.append({"role": "assistant", "content": text})
        doc = extract_json(text)
        if doc is None:
            problems = ["no JSON object found in the reply"]
        else:
            try:
                s = canonicalize(scenario_from_doc(doc, f"llm-{ctx.seed}"))
            except (SchemaError, OrderingError) as exc:
                problems = [f"schema: {exc}"]
            else:
                report = validate(s, ctx.subgraph, horizon_s=c.horizon_s, max_events=c.max_events, causal=c.causal)
                if report.valid and s.events:
                    s.meta.update({"generator": "llm", "attempts": attempt, "seed": ctx.seed,
                                   "class": (c.scenario_class or infer_class(s.events)).value})
                    return s
                problems = [f"{v.rule} (event {v.event_index}): {v.message}" for v in report.violations]
        errors.append(f"attempt {attempt}: " + "; ".join(problems))
        messages.append({"role": "user", "content": _repair_message(problems)})
    log.info("language-model backend failed (%s); using rule-based fallback", " | ".join(errors))
    try:
        s = propose_rule_based(ctx)
    except GenerationError as exc:
        raise GenerationError(f"language-model attempts failed and fallback failed: {exc}") from exc
    s.meta.update({"generator": "rule_fallback", "attempts": max_attempts, "llm_errors": errors})
    return s
