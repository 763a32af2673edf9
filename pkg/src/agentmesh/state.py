"""Shared domain types and the virtual workspace agents communicate through.

Agents never talk to each other directly. The planner writes a plan artifact,
the coder and debugger write files, and the reviewer reads everything back.
All of that lives in a :class:`VirtualWorkspace`.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import TYPE_CHECKING, Any, Callable, Iterable, Mapping

from .errors import InvalidPath, InvalidRequest

if TYPE_CHECKING:
    from .reviewer import ReviewReport


class Agent(str, Enum):
    PLANNER = "Planner"
    CODER = "Coder"
    DEBUGGER = "Debugger"
    REVIEWER = "Reviewer"
    ORCHESTRATOR = "Orchestrator"
    SANDBOX = "Sandbox"


LLM_AGENTS = frozenset({Agent.PLANNER, Agent.CODER, Agent.DEBUGGER, Agent.REVIEWER})


class EventKind(str, Enum):
    PROMPT_SENT = "PromptSent"
    COMPLETION_RECEIVED = "CompletionReceived"
    EXECUTION_RUN = "ExecutionRun"
    STATE_UPDATE = "StateUpdate"
    LOOP_BREAK = "LoopBreak"
    ERROR = "Error"


@dataclass(frozen=True)
class UserRequest:
    text: str

    def __post_init__(self) -> None:
        if not isinstance(self.text, str) or not self.text.strip():
            raise InvalidRequest("user request text must be non-empty")


@dataclass(frozen=True)
class Subtask:
    index: int
    title: str
    detail: str = ""

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError(f"subtask index must be >= 1, got {self.index}")
        if not self.title.strip():
            raise ValueError("subtask title must be non-empty")

    def line(self) -> str:
        """The task as a single plan line, ``<index>. <title>[: <detail>]``."""
        if self.detail:
            return f"{self.index}. {self.title}: {self.detail}"
        return f"{self.index}. {self.title}"


@dataclass(frozen=True)
class Plan:
    tasks: tuple[Subtask, ...]
    source_text: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ValueError("a plan needs at least one task")
        for expected, task in enumerate(self.tasks, start=1):
            if task.index != expected:
                raise ValueError(
                    f"plan indices must run 1..n; task {task.title!r} has index {task.index}"
                )

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)


def validate_path(path: str) -> str:
    """Return *path* unchanged if it is a safe relative workspace path."""
    if not isinstance(path, str) or not path or "\x00" in path:
        raise InvalidPath(f"invalid workspace path: {path!r}")
    if path.startswith(("/", "\\")) or (len(path) > 1 and path[1] == ":"):
        raise InvalidPath(f"workspace paths must be relative: {path!r}")
    segments = path.replace("\\", "/").split("/")
    if any(seg == ".." for seg in segments):
        raise InvalidPath(f"workspace paths may not contain '..': {path!r}")
    if any(seg == "" for seg in segments):
        raise InvalidPath(f"workspace path has an empty segment: {path!r}")
    return path


@dataclass
class VirtualWorkspace:
    """In-memory project state: file path -> code text, plus named artifacts."""

    files: dict[str, str] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for path in self.files:
            validate_path(path)

    def copy(self) -> VirtualWorkspace:
        return VirtualWorkspace(dict(self.files), dict(self.artifacts))

    def __contains__(self, path: str) -> bool:
        return path in self.files

    def __getitem__(self, path: str) -> str:
        return self.files[path]

    def __len__(self) -> int:
        return len(self.files)


def apply_update(workspace: VirtualWorkspace, update: Mapping[str, str]) -> VirtualWorkspace:
    """Merge *update* into a copy of *workspace*, last writer wins per file.

    The input workspace is left untouched. Every path is validated before
    anything is written, so a bad key leaves no partial merge behind.
    """
    for path in update:
        validate_path(path)
    merged = workspace.copy()
    merged.files.update(update)
    return merged


def render_codebase(workspace: VirtualWorkspace) -> str:
    parts = []
    for path in sorted(workspace.files):
        parts.append(f"== FILE: {path} ==\n{workspace.files[path]}\n\n")
    return "".join(parts)


class StatusKind(str, Enum):
    CLEAN_PASS = "clean_pass"
    FIXED = "fixed"
    NEEDS_ATTENTION = "needs_attention"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class TaskStatus:
    kind: StatusKind
    fix_attempts: int = 0
    reason: str = ""

    def __post_init__(self) -> None:
        if self.kind is StatusKind.FIXED and self.fix_attempts < 1:
            raise ValueError("Fixed status needs fix_attempts >= 1")

    @classmethod
    def clean_pass(cls) -> TaskStatus:
        return cls(StatusKind.CLEAN_PASS)

    @classmethod
    def fixed(cls, fix_attempts: int) -> TaskStatus:
        return cls(StatusKind.FIXED, fix_attempts=fix_attempts)

    @classmethod
    def needs_attention(cls, reason: str, fix_attempts: int = 0) -> TaskStatus:
        return cls(StatusKind.NEEDS_ATTENTION, fix_attempts=fix_attempts, reason=reason)

    @classmethod
    def skipped(cls, reason: str) -> TaskStatus:
        return cls(StatusKind.SKIPPED, reason=reason)

    @property
    def ok(self) -> bool:
        return self.kind in (StatusKind.CLEAN_PASS, StatusKind.FIXED)

    def __str__(self) -> str:
        if self.kind is StatusKind.FIXED:
            return f"Fixed({self.fix_attempts})"
        if self.kind is StatusKind.CLEAN_PASS:
            return "CleanPass"
        name = "NeedsAttention" if self.kind is StatusKind.NEEDS_ATTENTION else "Skipped"
        return f"{name}({self.reason!r})"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


@dataclass(frozen=True)
class TranscriptEvent:
    seq: int
    ts: str
    agent: Agent
    event_kind: EventKind
    task_index: int | None
    payload: dict[str, Any]

    def to_record(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "agent": self.agent.value,
            "event_kind": self.event_kind.value,
            "task_index": self.task_index,
            "payload": self.payload,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> TranscriptEvent:
        return cls(
            seq=record["seq"],
            ts=record["ts"],
            agent=Agent(record["agent"]),
            event_kind=EventKind(record["event_kind"]),
            task_index=record["task_index"],
            payload=dict(record["payload"]),
        )


class Transcript:
    """Append-only event log with a gap-free sequence counter."""

    def __init__(self, clock: Callable[[], str] = _utc_now):
        self._clock = clock
        self._events: list[TranscriptEvent] = []
        self._lock = threading.Lock()

    def emit(
        self,
        agent: Agent,
        kind: EventKind,
        payload: dict[str, Any] | None = None,
        task_index: int | None = None,
    ) -> TranscriptEvent:
        with self._lock:
            event = TranscriptEvent(
                seq=len(self._events),
                ts=self._clock(),
                agent=agent,
                event_kind=kind,
                task_index=task_index,
                payload=dict(payload or {}),
            )
            self._events.append(event)
            return event

    @property
    def events(self) -> list[TranscriptEvent]:
        with self._lock:
            return list(self._events)

    def __len__(self) -> int:
        return len(self._events)


def transcript_to_jsonl(events: Iterable[TranscriptEvent]) -> str:
    return "".join(
        json.dumps(e.to_record(), ensure_ascii=False, sort_keys=False) + "\n" for e in events
    )


def transcript_from_jsonl(text: str) -> list[TranscriptEvent]:
    return [TranscriptEvent.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass
class RunReport:
    plan: Plan | None
    statuses: list[tuple[Subtask, TaskStatus]]
    review: ReviewReport | None
    transcript: list[TranscriptEvent]
    final_workspace: VirtualWorkspace
    complete: bool = True
    error: str | None = None
