"""Role prompt templates and the volatile-content lint.

A template is a system message plus a user message with ``{name}``
placeholders. Substitution is single-pass over known names only, so braces
inside code or tracebacks pass through untouched.

Template files are UTF-8 text. A line consisting solely of ``---`` splits
the system text (above) from the user text (below); without it the whole
file replaces the user text and the role's default system text is kept.
"""

from __future__ import annotations

import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import TemplateError, VolatilePromptError
from .gateway import ChatMessage, Role

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    system: str
    user: str
    required: frozenset[str] = frozenset()

    def check(self) -> None:
        present = set(_PLACEHOLDER.findall(self.user)) | set(_PLACEHOLDER.findall(self.system))
        missing = sorted(self.required - present)
        if missing:
            raise TemplateError(
                "template is missing placeholder(s): " + ", ".join("{%s}" % m for m in missing)
            )

    def render(self, **values: str) -> list[ChatMessage]:
        self.check()

        def sub(text: str) -> str:
            return _PLACEHOLDER.sub(
                lambda m: values[m.group(1)] if m.group(1) in values else m.group(0), text
            )

        messages = [ChatMessage(Role.SYSTEM, sub(self.system)), ChatMessage(Role.USER, sub(self.user))]
        lint_messages(messages)
        return messages

    def with_text(self, text: str) -> PromptTemplate:
        """Override from template file contents (see module docstring)."""
        lines = text.splitlines()
        if "---" in (ln.rstrip() for ln in lines):
            cut = next(i for i, ln in enumerate(lines) if ln.rstrip() == "---")
            system = "\n".join(lines[:cut]).strip()
            user = "\n".join(lines[cut + 1 :]).strip("\n")
        else:
            system, user = self.system, text.strip("\n")
        return PromptTemplate(system=system, user=user, required=self.required)

    def with_file(self, path: str | Path) -> PromptTemplate:
        return self.with_text(Path(path).read_text(encoding="utf-8"))


PLANNER_TEMPLATE = PromptTemplate(
    system="You are a software planning assistant. Your job is to help plan a project given a description.",
    user=(
        "Project goal: {request}\n"
        "Please output a numbered list of development tasks, including design, implementation, "
        "and testing steps needed to accomplish this goal. Be thorough but concise."
    ),
    required=frozenset({"request"}),
)

CODER_TEMPLATE = PromptTemplate(
    system=(
        "You are a senior software developer. Implement the following component. "
        "Use best practices and comment where necessary. Only return code for the current task; "
        "do not include explanations unless as code comments."
    ),
    user=(
        "Project plan:\n{plan}\n\n"
        "Current task:\n{task}\n\n"
        "{context}"
        "Implement the current task. Output only code in fenced blocks. The first line of each "
        "block must be a comment directive naming its target file, e.g. `# FILE: {main_file}`. "
        "When you change an existing file, output that file's complete new contents."
    ),
    required=frozenset({"plan", "task", "context"}),
)

DEBUGGER_TEMPLATE = PromptTemplate(
    system=(
        "You are a code debugging assistant. Given code and an error or failing test, "
        "you will identify the issue and propose a fix."
    ),
    user=(
        "Code:\n{code}\n\n"
        "Error:\n{error}\n\n"
        "Identify the cause of the error and modify the code to fix it. Provide only the corrected code."
    ),
    required=frozenset({"code", "error"}),
)

REVIEWER_TEMPLATE = PromptTemplate(
    system=(
        "You are a critical senior code reviewer. You check finished projects for correctness, "
        "quality, and whether they meet the original request."
    ),
    user=(
        "Original request:\n{request}\n\n"
        "Plan:\n{plan}\n\n"
        "Codebase:\n{codebase}"
        "{integration}"
        "Summarize any problems or improvements in the following code and confirm if the "
        "requirements are satisfied. End your report with exactly one line: "
        "`VERDICT: APPROVED` or `VERDICT: NEEDS_WORK`."
    ),
    required=frozenset({"request", "plan", "codebase"}),
)

DEFAULT_TEMPLATES = {
    "planner": PLANNER_TEMPLATE,
    "coder": CODER_TEMPLATE,
    "debugger": DEBUGGER_TEMPLATE,
    "reviewer": REVIEWER_TEMPLATE,
}


SANDBOX_DIR_PREFIX = "agentmesh-"
_TIMESTAMP = re.compile(r"\b\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}")


def _volatile_patterns() -> list[re.Pattern[str]]:
    tmp = re.escape(tempfile.gettempdir().rstrip("/"))
    return [
        re.compile(tmp + r"/" + re.escape(SANDBOX_DIR_PREFIX)),
        re.compile(re.escape(SANDBOX_DIR_PREFIX) + r"[A-Za-z0-9_]{6,}"),
        _TIMESTAMP,
    ]


def lint_messages(messages: list[ChatMessage]) -> None:
    """Reject prompts that would never reproduce across runs."""
    patterns = _volatile_patterns()
    for msg in messages:
        for pattern in patterns:
            m = pattern.search(msg.content)
            if m:
                raise VolatilePromptError(
                    f"{msg.role.value} message contains volatile content {m.group(0)!r}"
                )
