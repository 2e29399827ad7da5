"""Inputs shared by every generator backend."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..errors import ConfigurationError
from ..kgraph import KnowledgeGraph
from ..scenario import DEFAULT_HORIZON_S, MAX_EVENTS, ScenarioClass

DEFAULT_K = 5
SEED_LIMIT = 2 ** 64


@dataclass(frozen=True)
class Constraints:
    scenario_class: ScenarioClass | None = None  # None: sampled, feedback-weighted
    max_events: int = MAX_EVENTS
    horizon_s: float = DEFAULT_HORIZON_S
    causal: bool = True  # False drops cause links and rule C3

    def __post_init__(self) -> None:
        if not 1 <= self.max_events <= MAX_EVENTS:
            raise ConfigurationError(f"max_events must be in 1..{MAX_EVENTS}")
        if not self.horizon_s > 0:
            raise ConfigurationError("horizon_s must be positive")
        if self.scenario_class is not None and not isinstance(self.scenario_class, ScenarioClass):
            object.__setattr__(self, "scenario_class", ScenarioClass(self.scenario_class))

    def to_json(self) -> dict:
        return {"class": self.scenario_class.value if self.scenario_class else None,
                "max_events": self.max_events, "horizon_s": self.horizon_s, "causal": self.causal}


@dataclass(frozen=True)
class FeedbackExemplar:
    """Summary of a past high-impact scenario."""

    scenario_digest: str
    impact: float
    scenario_class: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.impact <= 1.0:
            raise ConfigurationError(f"exemplar impact {self.impact} outside [0, 1]")


@dataclass(frozen=True)
class GeneratorContext:
    subgraph: KnowledgeGraph
    constraints: Constraints = field(default_factory=Constraints)
    feedback: Sequence[FeedbackExemplar] = ()
    seed: int = 0
    k: int = DEFAULT_K

    def __post_init__(self) -> None:
        if not 0 <= self.seed < SEED_LIMIT:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if len(self.feedback) > self.k:
            raise ConfigurationError(f"at most {self.k} feedback exemplars allowed")
        object.__setattr__(self, "feedback", tuple(self.feedback))
