"""Exception hierarchy shared across modules."""


class ResiloopError(Exception):
    """Base class for all package errors."""


class TopologyParseError(ResiloopError, ValueError):
    """A topology, service or incident document could not be parsed."""


class IntegrityError(ResiloopError, ValueError):
    """Referential or structural integrity violated (duplicate ids, unknown routers...)."""


class LookupFailure(ResiloopError, KeyError):
    """An id does not name a component of the graph."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class SchemaError(ResiloopError, ValueError):
    """A failure-event document does not match the event schema."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class OrderingError(ResiloopError, ValueError):
    """A cause reference points forward in time."""


class GenerationError(ResiloopError):
    """A generator backend cannot produce a scenario for the given context."""


class ConfigurationError(ResiloopError, ValueError):
    """Invalid configuration (bad weights, trigger before first failure...)."""


class CampaignError(ResiloopError):
    """No iteration of a campaign produced a usable scenario."""
