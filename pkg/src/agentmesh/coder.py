"""Per-task code generation and extraction of code from completions."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmptyContribution
from .gateway import Backend, ChatMessage, GenerationParams, ask
from .planner import render_plan
from .prompts import CODER_TEMPLATE, PromptTemplate
from .state import Agent, Plan, Subtask, Transcript, VirtualWorkspace, render_codebase, validate_path

DEFAULT_CONTEXT_BUDGET = 24_000
DEFAULT_MAIN_FILE = "main.py"

_FENCE = re.compile(r"^\s*```")
_DIRECTIVE = re.compile(r"^(?:#|//) FILE: (\S.*?)\s*$")
_DEFINITION = re.compile(
    r"^\s*(?:async\s+def|def|class|function|func|fn|pub\s+fn|struct|interface|enum|trait|impl|"
    r"export\s+(?:default\s+)?(?:function|class|const|interface|type))\b"
)


@dataclass(frozen=True)
class CodeContribution:
    files: dict[str, str]
    raw_completion: str = ""

    def __post_init__(self) -> None:
        if not self.files:
            raise EmptyContribution("contribution has no files")
        for path in self.files:
            validate_path(path)

    @property
    def primary_path(self) -> str:
        return next(iter(self.files))


def signature_digest(workspace: VirtualWorkspace) -> str:
    """Per file: the path and every line that looks like a definition."""
    parts = []
    for path in sorted(workspace.files):
        sigs = [ln.rstrip() for ln in workspace.files[path].splitlines() if _DEFINITION.match(ln)]
        parts.append(f"== SIGNATURES: {path} ==\n" + "".join(s + "\n" for s in sigs) + "\n")
    return "".join(parts)


def workspace_context(workspace: VirtualWorkspace, context_budget: int) -> str:
    if not workspace.files:
        return ""
    full = render_codebase(workspace)
    if len(full.encode("utf-8")) <= context_budget:
        return "Existing code:\n" + full
    return "Existing code (too large to show in full; definitions only):\n" + signature_digest(workspace)


def build_coder_prompt(
    task: Subtask,
    plan: Plan,
    workspace: VirtualWorkspace,
    template: PromptTemplate = CODER_TEMPLATE,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    main_file: str = DEFAULT_MAIN_FILE,
) -> list[ChatMessage]:
    if task not in plan.tasks:
        raise ValueError(f"task {task.index} ({task.title!r}) is not part of the plan")
    return template.render(
        plan=render_plan(plan),
        task=task.line(),
        context=workspace_context(workspace, context_budget),
        main_file=main_file,
    )


def _fence_bodies(completion: str) -> list[list[str]] | None:
    """Split out fenced block contents, or None if there are no fences."""
    blocks: list[list[str]] = []
    current: list[str] | None = None
    for line in completion.splitlines():
        if _FENCE.match(line):
            if current is None:
                current = []
            else:
                blocks.append(current)
                current = None
        elif current is not None:
            current.append(line)
    if current is not None:  # unterminated final fence
        blocks.append(current)
    return blocks if blocks else None


def _tidy(lines: list[str]) -> str:
    while lines and not lines[0].strip():
        lines = lines[1:]
    return "\n".join(lines).rstrip()


def extract_contribution(completion: str, default_path: str = DEFAULT_MAIN_FILE) -> CodeContribution:
    """Pull code out of a completion, honouring ``# FILE: <path>`` directives.

    Prose outside fences is discarded. Fences without a directive go to
    *default_path*, joined by one blank line. A completion with no fences at
    all is taken whole (trimmed).
    """
    validate_path(default_path)
    bodies = _fence_bodies(completion)
    if bodies is None:
        code = completion.strip()
        if not code:
            raise EmptyContribution("completion is empty")
        return CodeContribution({default_path: code}, completion)

    collected: dict[str, list[str]] = {}
    for body in bodies:
        first = next((i for i, ln in enumerate(body) if ln.strip()), None)
        path = default_path
        if first is not None:
            m = _DIRECTIVE.match(body[first])
            if m:
                path = validate_path(m.group(1))
                body = body[first + 1 :]
        code = _tidy(body)
        if code:
            collected.setdefault(path, []).append(code)
    if not collected:
        raise EmptyContribution("fenced blocks contain no code")
    return CodeContribution({p: "\n\n".join(chunks) for p, chunks in collected.items()}, completion)


def generate_code(
    task: Subtask,
    plan: Plan,
    workspace: VirtualWorkspace,
    backend: Backend,
    *,
    template: PromptTemplate = CODER_TEMPLATE,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    main_file: str = DEFAULT_MAIN_FILE,
    params: GenerationParams | None = None,
    transcript: Transcript | None = None,
) -> CodeContribution:
    messages = build_coder_prompt(task, plan, workspace, template, context_budget, main_file)
    completion = ask(
        backend, Agent.CODER, messages, params, transcript=transcript, task_index=task.index
    )
    return extract_contribution(completion, main_file)
