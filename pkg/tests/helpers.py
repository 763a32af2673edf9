"""Test doubles and checkers shared across the suite."""

from __future__ import annotations

import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

from agentmesh.gateway import CassetteRecord, ReplayBackend
from agentmesh.state import Agent, EventKind, TaskStatus, TranscriptEvent

FIXTURES = Path(__file__).parent / "fixtures"
CASE_STUDY = FIXTURES / "case_study"
NO_DIGEST = "0" * 64


def lenient_cassette(*items: tuple[str, str]) -> ReplayBackend:
    records = [CassetteRecord(i, Agent(role), NO_DIGEST, text) for i, (role, text) in enumerate(items)]
    return ReplayBackend(records, strict=False)


def chat_body(text: str) -> bytes:
    return json.dumps(
        {"id": "x", "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}
    ).encode()


class MockChatServer:
    """Local chat-completions endpoint answering from a script.

    *script* is a list of ``(status, text)`` pairs served in order, or a
    callable taking the parsed request body and returning one.
    """

    def __init__(self, script: list[tuple[int, str]] | Callable[[dict], tuple[int, str]]):
        self.script = script
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        self.connections = 0
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def setup(self):
                with outer._lock:
                    outer.connections += 1
                super().setup()

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with outer._lock:
                    outer.requests.append(body)
                    outer.headers.append(dict(self.headers))
                    if callable(outer.script):
                        status, text = outer.script(body)
                    else:
                        status, text = outer.script[len(outer.requests) - 1]
                payload = chat_body(text) if status == 200 else json.dumps({"error": text}).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/v1"

    @property
    def request_count(self) -> int:
        return len(self.requests)

    def __enter__(self) -> MockChatServer:
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()


def llm_calls(events: list[TranscriptEvent]) -> Counter:
    return Counter(e.agent for e in events if e.event_kind is EventKind.PROMPT_SENT)


def audit_transcript(events: list[TranscriptEvent], max_fix_attempts: int) -> list[str]:
    """Check call accounting and ordering of one completed run's transcript.

    Returns human-readable violations; empty means the transcript is clean.
    """
    problems = []
    seqs = [e.seq for e in events]
    if seqs != list(range(len(events))):
        problems.append(f"seq not gap-free: {seqs[:10]}...")

    calls = llm_calls(events)
    plan_events = [
        e for e in events if e.agent is Agent.ORCHESTRATOR and "artifact" in e.payload
    ]
    if calls[Agent.PLANNER] != 1:
        problems.append(f"planner calls = {calls[Agent.PLANNER]}")
    if len(plan_events) != 1:
        problems.append("plan artifact not recorded exactly once")
        return problems
    n_tasks = len(plan_events[0].payload["tasks"])
    if calls[Agent.CODER] != n_tasks:
        problems.append(f"coder calls = {calls[Agent.CODER]}, plan has {n_tasks} tasks")
    if calls[Agent.REVIEWER] != 1:
        problems.append(f"reviewer calls = {calls[Agent.REVIEWER]}")

    per_task = Counter(
        e.task_index
        for e in events
        if e.agent is Agent.DEBUGGER and e.event_kind is EventKind.PROMPT_SENT
    )
    for index, count in per_task.items():
        if count > max_fix_attempts:
            problems.append(f"task {index}: {count} debugger calls > {max_fix_attempts}")

    # unidirectional flow: task-scoped events never go back to an earlier task
    last = 0
    for e in events:
        if e.task_index is None:
            continue
        if e.task_index < last:
            problems.append(f"seq {e.seq}: event for task {e.task_index} after task {last} started")
        last = max(last, e.task_index)

    # the reviewer comes after every task event
    review_seq = next(
        e.seq for e in events if e.agent is Agent.REVIEWER and e.event_kind is EventKind.PROMPT_SENT
    ) if calls[Agent.REVIEWER] else None
    if review_seq is not None and any(e.task_index is not None and e.seq > review_seq for e in events):
        problems.append("task event after the reviewer started")
    return problems


def sh_script(passes: bool, tag: int) -> str:
    """Tiny shell program whose pass/fail is fixed; *tag* keeps variants distinct."""
    return f"# v{tag}\nexit {0 if passes else 1}"


def simulate_debug(initial: str, fixes: list[str], max_fix_attempts: int) -> tuple[str, int, int]:
    """Reference model of the verify/fix loop for :func:`sh_script` programs.

    Returns ``(outcome, fix_attempts, verifications)`` where outcome is one of
    ``CleanPass``, ``Fixed``, ``retry limit`` or ``identical fix``.
    """
    current = initial
    verifications = 1
    if current.endswith("exit 0"):
        return "CleanPass", 0, verifications
    attempts = 0
    while attempts < max_fix_attempts:
        fix = fixes[attempts]
        attempts += 1
        if fix.strip() == current.strip():
            return "identical fix", attempts, verifications
        current = fix
        verifications += 1
        if current.endswith("exit 0"):
            return "Fixed", attempts, verifications
    return "retry limit", attempts, verifications


def case_study_args(out: Path, *extra: str) -> list[str]:
    return [
        "run",
        "--request-file", str(CASE_STUDY / "request.txt"),
        "--config", str(CASE_STUDY / "agentmesh.toml"),
        "--out", str(out),
        *extra,
    ]


def without_ts(transcript_text: str) -> list[dict]:
    records = [json.loads(line) for line in transcript_text.splitlines()]
    for r in records:
        r.pop("ts")
    return records


def output_tree(out: Path) -> dict[str, bytes]:
    """All output files as bytes, with transcript timestamps blanked."""
    tree = {}
    for p in sorted(out.rglob("*")):
        if p.is_file():
            data = p.read_bytes()
            if p.name == "transcript.jsonl":
                data = json.dumps(without_ts(data.decode("utf-8"))).encode()
            tree[p.relative_to(out).as_posix()] = data
    return tree


# criterion number -> (passed, label); filled by test_acceptance, printed by conftest
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def expected_status(kind: str, attempts: int) -> TaskStatus:
    if kind == "CleanPass":
        return TaskStatus.clean_pass()
    if kind == "Fixed":
        return TaskStatus.fixed(attempts)
    return TaskStatus.needs_attention(kind, attempts)
