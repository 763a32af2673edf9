"""Verify generated code by running it, and drive a bounded LLM fix loop."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .coder import CodeContribution, extract_contribution
from .errors import CassetteError, EmptyContribution, GatewayError, InvalidPath
from .gateway import Backend, ChatMessage, GenerationParams, ask
from .prompts import DEBUGGER_TEMPLATE, PromptTemplate
from .sandbox import ExecutionOutcome, SandboxConfig, run_workspace
from .state import (
    Agent,
    EventKind,
    TaskStatus,
    Transcript,
    VirtualWorkspace,
    apply_update,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_FIX_ATTEMPTS = 3
TIMEOUT_NOTICE = (
    "The program did not finish within the time limit and was terminated. "
    "Look for infinite loops or blocking reads."
)
RETRY_LIMIT = "retry limit"
IDENTICAL_FIX = "identical fix"

_TRACE_FILE = re.compile(r'File "(?:\./)?([^"]+)"')


@dataclass
class DebugResult:
    final_files: dict[str, str]
    status: TaskStatus
    verification_rounds: int
    fix_attempts: int
    outcomes: list[ExecutionOutcome] = field(default_factory=list)


def outcome_payload(entry_file: str, outcome: ExecutionOutcome) -> dict:
    # duration is left out on purpose: transcripts must diff clean across replays
    return {
        "entry_file": entry_file,
        "exit_code": outcome.exit_code,
        "timed_out": outcome.timed_out,
        "passed": outcome.passed,
        "stdout": outcome.stdout,
        "stderr": outcome.stderr,
    }


def verify(
    workspace: VirtualWorkspace,
    changed_files: Iterable[str],
    entry_file: str,
    sandbox_config: SandboxConfig,
    extra_files: Mapping[str, str] | None = None,
) -> tuple[ExecutionOutcome, bool]:
    """Run *entry_file* against a materialized copy of *workspace*.

    Passes iff the process exits 0 without timing out. *extra_files* (a
    harness script, say) are written alongside but never join the workspace.
    """
    missing = set(changed_files) - set(workspace.files)
    if missing:
        raise ValueError(f"changed files not in workspace: {sorted(missing)}")
    outcome = run_workspace(workspace, entry_file, sandbox_config, extra_files)
    return outcome, outcome.passed


def error_text(outcome: ExecutionOutcome) -> str:
    if outcome.timed_out:
        return TIMEOUT_NOTICE
    if outcome.stderr.strip():
        return outcome.stderr.rstrip()
    text = f"Process exited with status {outcome.exit_code} and wrote nothing to stderr."
    if outcome.stdout.strip():
        text += "\nOutput:\n" + outcome.stdout.rstrip()
    return text


def build_fix_prompt(
    code: str, outcome: ExecutionOutcome, template: PromptTemplate = DEBUGGER_TEMPLATE
) -> list[ChatMessage]:
    if outcome.passed:
        raise ValueError("fix prompt needs a failing outcome")
    return template.render(code=code, error=error_text(outcome))


def normalize_code(text: str) -> str:
    return "\n".join(line.rstrip() for line in text.splitlines()).rstrip("\n")


def failing_file(outcome: ExecutionOutcome, candidate: Mapping[str, str], default: str) -> str:
    """Innermost traceback frame that points into a candidate file, else *default*."""
    hits = [p for p in _TRACE_FILE.findall(outcome.stderr) if p in candidate]
    return hits[-1] if hits else default


def debug_task(
    workspace: VirtualWorkspace,
    contribution: CodeContribution,
    entry_file: str,
    backend: Backend,
    max_fix_attempts: int = DEFAULT_MAX_FIX_ATTEMPTS,
    sandbox_config: SandboxConfig | None = None,
    *,
    extra_files: Mapping[str, str] | None = None,
    template: PromptTemplate = DEBUGGER_TEMPLATE,
    params: GenerationParams | None = None,
    transcript: Transcript | None = None,
    task_index: int | None = None,
) -> DebugResult:
    """Verify *contribution* and, on failure, ask for fixes until it passes.

    Stops on the first passing run, after ``max_fix_attempts`` fixes, or as
    soon as a fix comes back (normalized) identical to the code it was meant
    to replace. Replay-cassette errors propagate; any other gateway failure
    ends the task as needing attention. ``final_files`` is always the last
    candidate that was actually run.
    """
    if max_fix_attempts < 0:
        raise ValueError("max_fix_attempts must be >= 0")
    config = sandbox_config or SandboxConfig()
    candidate = dict(contribution.files)
    scratch = apply_update(workspace, candidate)
    primary = contribution.primary_path
    outcomes: list[ExecutionOutcome] = []
    fixes = 0

    def emit(agent: Agent, kind: EventKind, payload: dict) -> None:
        if transcript is not None:
            transcript.emit(agent, kind, payload, task_index)

    def result(status: TaskStatus) -> DebugResult:
        return DebugResult(dict(candidate), status, len(outcomes), fixes, outcomes)

    def give_up(reason: str) -> DebugResult:
        emit(Agent.DEBUGGER, EventKind.LOOP_BREAK, {"reason": reason, "fix_attempts": fixes})
        return result(TaskStatus.needs_attention(reason, fixes))

    while True:
        outcome, passed = verify(scratch, candidate, entry_file, config, extra_files)
        outcomes.append(outcome)
        emit(Agent.SANDBOX, EventKind.EXECUTION_RUN, outcome_payload(entry_file, outcome))
        if passed:
            return result(TaskStatus.fixed(fixes) if fixes else TaskStatus.clean_pass())
        if fixes >= max_fix_attempts:
            return give_up(RETRY_LIMIT)

        target = failing_file(outcome, candidate, primary)
        messages = build_fix_prompt(candidate[target], outcome, template)
        try:
            completion = ask(
                backend, Agent.DEBUGGER, messages, params, transcript=transcript, task_index=task_index
            )
        except CassetteError:
            raise
        except GatewayError as exc:
            return give_up(f"backend error: {exc}")
        fixes += 1

        try:
            fix = extract_contribution(completion, target)
        except (EmptyContribution, InvalidPath) as exc:
            return give_up(f"unusable fix: {exc}")
        if all(normalize_code(text) == normalize_code(candidate.get(path, "")) for path, text in fix.files.items()):
            log.info("debugger returned identical code for task %s; giving up", task_index)
            return give_up(IDENTICAL_FIX)
        candidate.update(fix.files)
        scratch = apply_update(scratch, fix.files)
