"""Final review of the assembled codebase, with an optional integration run."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .debugger import outcome_payload
from .errors import CassetteError, GatewayError, SandboxError
from .gateway import Backend, ChatMessage, GenerationParams, ask
from .planner import render_plan
from .prompts import REVIEWER_TEMPLATE, PromptTemplate
from .sandbox import ExecutionOutcome, SandboxConfig, run_workspace
from .state import Agent, EventKind, Plan, Transcript, UserRequest, VirtualWorkspace

DEFAULT_REVIEW_BUDGET = 48_000
APPROVED_LINE = "VERDICT: APPROVED"
NEEDS_WORK_LINE = "VERDICT: NEEDS_WORK"


class Verdict(str, Enum):
    APPROVED = "approved"
    NEEDS_WORK = "needs_work"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ReviewReport:
    text: str
    verdict: Verdict
    integration_outcome: ExecutionOutcome | None = None


@dataclass(frozen=True)
class IntegrationConfig:
    entry_file: str
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    extra_files: Mapping[str, str] = field(default_factory=dict)


def parse_verdict(report_text: str) -> Verdict:
    for line in reversed(report_text.splitlines()):
        # tolerate markdown decoration around the verdict line
        bare = line.strip().strip("`*").strip()
        if bare == APPROVED_LINE:
            return Verdict.APPROVED
        if bare == NEEDS_WORK_LINE:
            return Verdict.NEEDS_WORK
    return Verdict.UNKNOWN


def codebase_for_review(workspace: VirtualWorkspace, budget: int = DEFAULT_REVIEW_BUDGET) -> str:
    """Like ``render_codebase`` but cut file by file once *budget* bytes are used."""
    parts = []
    remaining = budget
    for path in sorted(workspace.files):
        body = workspace.files[path]
        raw = body.encode("utf-8")
        if len(raw) > remaining:
            kept = raw[: max(remaining, 0)].decode("utf-8", "ignore")
            omitted = len(raw) - len(kept.encode("utf-8"))
            body = kept + f"\n[... truncated: {omitted} bytes omitted ...]"
        remaining -= len(raw)
        parts.append(f"== FILE: {path} ==\n{body}\n\n")
    return "".join(parts)


def integration_summary(entry_file: str, outcome: ExecutionOutcome | None, note: str = "") -> str:
    if outcome is None:
        return f"Integration run of {entry_file}: {note}"
    if outcome.timed_out:
        return f"Integration run of {entry_file}: timed out and was terminated."
    if outcome.passed:
        return f"Integration run of {entry_file}: exited with status 0."
    tail = outcome.stderr.strip()[-2000:] or outcome.stdout.strip()[-2000:]
    return f"Integration run of {entry_file}: exited with status {outcome.exit_code}. Output:\n{tail}"


def build_review_prompt(
    request: UserRequest,
    plan: Plan,
    workspace: VirtualWorkspace,
    template: PromptTemplate = REVIEWER_TEMPLATE,
    *,
    integration: str | None = None,
    budget: int = DEFAULT_REVIEW_BUDGET,
) -> list[ChatMessage]:
    if not workspace.files:
        raise ValueError("cannot review an empty workspace")
    return template.render(
        request=request.text.strip(),
        plan=render_plan(plan),
        codebase=codebase_for_review(workspace, budget),
        integration=f"Integration test result:\n{integration}\n\n" if integration else "",
    )


def review(
    request: UserRequest,
    plan: Plan,
    workspace: VirtualWorkspace,
    backend: Backend,
    integration: IntegrationConfig | None = None,
    *,
    template: PromptTemplate = REVIEWER_TEMPLATE,
    params: GenerationParams | None = None,
    transcript: Transcript | None = None,
    budget: int = DEFAULT_REVIEW_BUDGET,
) -> ReviewReport:
    """Run the optional integration check, then ask for the review.

    The workspace is only read. A failing backend produces an ``UNKNOWN``
    report instead of an exception so the run keeps its code; cassette
    errors still propagate because they mean the replay itself is broken.
    """
    if not workspace.files:
        raise ValueError("cannot review an empty workspace")
    outcome = None
    summary = None
    if integration is not None:
        entry = integration.entry_file
        if entry in workspace.files or entry in integration.extra_files:
            try:
                outcome = run_workspace(workspace, entry, integration.sandbox, integration.extra_files)
            except SandboxError as exc:
                summary = integration_summary(entry, None, f"could not be run ({exc}).")
            else:
                summary = integration_summary(entry, outcome)
                if transcript is not None:
                    transcript.emit(Agent.SANDBOX, EventKind.EXECUTION_RUN, outcome_payload(entry, outcome))
        else:
            summary = integration_summary(entry, None, "file not present in the project; skipped.")

    messages = build_review_prompt(
        request, plan, workspace, template, integration=summary, budget=budget
    )
    try:
        text = ask(backend, Agent.REVIEWER, messages, params, transcript=transcript)
    except CassetteError:
        raise
    except GatewayError as exc:
        return ReviewReport(f"Review failed: {type(exc).__name__}: {exc}", Verdict.UNKNOWN, outcome)
    return ReviewReport(text, parse_verdict(text), outcome)
