"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class AgentMeshError(Exception):
    """Base class for all errors raised by agentmesh."""


class InvalidPath(AgentMeshError, ValueError):
    """A workspace path is absolute, empty, or escapes via ``..``."""


class InvalidRequest(AgentMeshError, ValueError):
    """A user request or completion request violates its invariants."""


class TemplateError(AgentMeshError, ValueError):
    """A prompt template is missing a required placeholder."""


class VolatilePromptError(AgentMeshError, ValueError):
    """A prompt contains run-specific content (temp paths, timestamps)."""


class EmptyPlan(AgentMeshError):
    """The planner completion contained no numbered lines."""


class EmptyContribution(AgentMeshError):
    """A completion yielded no code after extraction."""


class GatewayError(AgentMeshError):
    """Base for failures while obtaining a completion."""


class TransportError(GatewayError):
    """Network failure, 5xx, or a non-retriable HTTP status from the live backend."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class RateLimited(TransportError):
    """The live backend kept answering 429 until the retry budget ran out."""


class CassetteError(GatewayError):
    """Replay cassette cannot satisfy the request. Always fatal to a run."""


class CassetteExhausted(CassetteError):
    pass


class CassetteMismatch(CassetteError):
    pass


class SandboxError(AgentMeshError):
    pass


class SpawnError(SandboxError):
    """The runtime command could not be started."""


class SandboxIOError(SandboxError, OSError):
    pass


class OutputError(AgentMeshError, OSError):
    """Run outputs could not be written."""


class ConfigError(AgentMeshError, ValueError):
    pass
