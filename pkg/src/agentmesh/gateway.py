"""Completion backends: live HTTP, recording proxy, and cassette replay.

Every agent goes through :func:`complete` (or :func:`ask`, which also logs
to the transcript). Swapping the backend is how the pipeline runs offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Protocol

import httpx

from .errors import (
    CassetteExhausted,
    CassetteMismatch,
    GatewayError,
    InvalidRequest,
    RateLimited,
    TransportError,
)
from .state import LLM_AGENTS, Agent, EventKind

if TYPE_CHECKING:
    from .state import Transcript

log = logging.getLogger(__name__)

API_KEY_ENV = "AGENTMESH_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4"

BACKOFF_BASE = 0.5
BACKOFF_CAP = 8.0
MAX_RETRIES = 4
NON_RETRIABLE = frozenset({400, 401, 403})


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        if self.role is not Role.ASSISTANT and not self.content:
            raise InvalidRequest(f"{self.role.value} message content must be non-empty")

    def to_wire(self) -> dict[str, str]:
        return {"role": self.role.value, "content": self.content}


@dataclass(frozen=True)
class GenerationParams:
    model_name: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 1.0:
            raise InvalidRequest(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise InvalidRequest("max_output_tokens must be positive")


def prompt_digest(messages: list[ChatMessage]) -> str:
    h = hashlib.sha256()
    for msg in messages:
        h.update((msg.role.value + "\x1f" + msg.content + "\x1e").encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class CompletionRequest:
    agent_role: Agent
    messages: tuple[ChatMessage, ...]
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "agent_role", Agent(self.agent_role))
        object.__setattr__(self, "messages", tuple(self.messages))
        if self.agent_role not in LLM_AGENTS:
            raise InvalidRequest(f"{self.agent_role.value} does not talk to the LLM")
        if not self.messages or self.messages[0].role is not Role.SYSTEM:
            raise InvalidRequest("first message must be a system message")

    @property
    def digest(self) -> str:
        return prompt_digest(list(self.messages))


@dataclass(frozen=True)
class CassetteRecord:
    seq: int
    agent_role: Agent
    prompt_sha256: str
    response: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "agent_role", Agent(self.agent_role))
        digest = self.prompt_sha256
        if len(digest) != 64 or any(c not in "0123456789abcdef" for c in digest):
            raise ValueError(f"prompt_sha256 must be 64 lowercase hex chars, got {digest!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "agent_role": self.agent_role.value,
                "prompt_sha256": self.prompt_sha256,
                "response": self.response,
            },
            ensure_ascii=False,
        )


def load_cassette(path: str | Path) -> list[CassetteRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            raw = json.loads(line)
            record = CassetteRecord(
                seq=raw["seq"],
                agent_role=raw["agent_role"],
                prompt_sha256=raw["prompt_sha256"],
                response=raw["response"],
            )
            if record.seq != len(records):
                raise ValueError(f"{path}:{lineno}: expected seq {len(records)}, found {record.seq}")
            records.append(record)
    return records


def save_cassette(records: list[CassetteRecord], path: str | Path) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")


def retry_schedule(attempt: int) -> float:
    """Seconds to wait before retry number *attempt* (1-based)."""
    if attempt < 1:
        raise ValueError("attempt is 1-based")
    return min(BACKOFF_BASE * 2 ** (attempt - 1), BACKOFF_CAP)


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


class LiveBackend:
    """Chat-completions style HTTP endpoint.

    Retries 429, 5xx and transport failures up to ``max_retries`` times with
    :func:`retry_schedule` delays; 400/401/403 (and other 4xx) fail at once.
    """

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        max_retries: int = MAX_RETRIES,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_retries = max_retries
        self._sleep = sleep
        self._client = client or httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _payload(self, request: CompletionRequest) -> dict:
        return {
            "model": request.params.model_name,
            "messages": [m.to_wire() for m in request.messages],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_output_tokens,
        }

    def complete(self, request: CompletionRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = self._payload(request)
        last: TransportError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = retry_schedule(attempt)
                log.info("retrying %s call (attempt %d) in %.1fs", request.agent_role.value, attempt, delay)
                self._sleep(delay)
            try:
                resp = self._client.post(self.url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last = TransportError(f"transport failure: {exc}")
                continue
            if resp.status_code == 200:
                return self._extract(resp)
            if resp.status_code == 429:
                last = RateLimited("rate limited (429)", status=429)
            elif resp.status_code >= 500:
                last = TransportError(f"server error {resp.status_code}", status=resp.status_code)
            else:
                raise TransportError(
                    f"request rejected with HTTP {resp.status_code}: {resp.text[:200]}",
                    status=resp.status_code,
                )
        assert last is not None
        raise last

    @staticmethod
    def _extract(resp: httpx.Response) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc
        if not isinstance(content, str):
            raise TransportError("completion content is not a string")
        return content


class RecordingBackend:
    """Forwards to an inner backend and appends every exchange to a cassette file."""

    def __init__(self, inner: Backend, cassette_path: str | Path):
        self.inner = inner
        self.path = Path(cassette_path)
        self.records: list[CassetteRecord] = []
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            response = self.inner.complete(request)
            record = CassetteRecord(
                seq=len(self.records),
                agent_role=request.agent_role,
                prompt_sha256=request.digest,
                response=response,
            )
            self.records.append(record)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")
            return response


class ReplayBackend:
    """Serves responses from a cassette in global sequence order.

    Strict mode validates both the agent role and the prompt digest of the
    next record; lenient mode checks the role only, which is what
    hand-authored fixtures need.
    """

    def __init__(self, records: list[CassetteRecord], strict: bool = True):
        self.records = list(records)
        self.strict = strict
        self.position = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, strict: bool = True) -> ReplayBackend:
        return cls(load_cassette(path), strict=strict)

    @property
    def remaining(self) -> int:
        return len(self.records) - self.position

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            if self.position >= len(self.records):
                raise CassetteExhausted(
                    f"cassette exhausted after {len(self.records)} records "
                    f"({request.agent_role.value} request unanswered)"
                )
            record = self.records[self.position]
            if record.agent_role is not request.agent_role:
                raise CassetteMismatch(
                    f"record {record.seq} is for {record.agent_role.value}, "
                    f"request is from {request.agent_role.value}"
                )
            if self.strict and record.prompt_sha256 != request.digest:
                raise CassetteMismatch(
                    f"record {record.seq} digest {record.prompt_sha256[:12]}... "
                    f"does not match request digest {request.digest[:12]}..."
                )
            self.position += 1
            return record.response


def complete(backend: Backend, request: CompletionRequest) -> str:
    return backend.complete(request)


def ask(
    backend: Backend,
    agent: Agent,
    messages: list[ChatMessage],
    params: GenerationParams | None = None,
    *,
    transcript: Transcript | None = None,
    task_index: int | None = None,
) -> str:
    """Send one prompt and log both directions to *transcript*."""
    request = CompletionRequest(agent, tuple(messages), params or GenerationParams())
    if transcript is not None:
        transcript.emit(
            agent,
            EventKind.PROMPT_SENT,
            {
                "model": request.params.model_name,
                "prompt_sha256": request.digest,
                "messages": [m.to_wire() for m in request.messages],
            },
            task_index,
        )
    try:
        text = complete(backend, request)
    except GatewayError as exc:
        if transcript is not None:
            transcript.emit(
                agent,
                EventKind.ERROR,
                {"error": type(exc).__name__, "message": str(exc)},
                task_index,
            )
        raise
    if transcript is not None:
        transcript.emit(agent, EventKind.COMPLETION_RECEIVED, {"text": text}, task_index)
    return text
