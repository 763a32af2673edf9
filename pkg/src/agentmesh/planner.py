"""Requirement analysis: turn a request into a numbered plan and back."""

from __future__ import annotations

import re

from .errors import EmptyPlan
from .gateway import Backend, ChatMessage, GenerationParams, ask
from .prompts import PLANNER_TEMPLATE, PromptTemplate
from .state import Agent, Plan, Subtask, Transcript, UserRequest

NUMBERED_LINE = re.compile(r"^\s*(\d+)[.)]\s*(.*)$")


def build_planner_prompt(
    request: UserRequest, template: PromptTemplate = PLANNER_TEMPLATE
) -> list[ChatMessage]:
    return template.render(request=request.text.strip())


def _clean_title(title: str) -> str:
    title = title.strip()
    # LLMs like to bold list headings
    if len(title) > 4 and title.startswith("**") and title.endswith("**"):
        title = title[2:-2].strip()
    return title


def parse_plan(completion: str) -> Plan:
    """Parse a numbered-list completion into a :class:`Plan`.

    Lines starting with ``<int>.`` or ``<int>)`` open a task. Text before the
    first colon is the title; the rest of the line plus any following
    non-numbered lines form the detail. Preamble before the first numbered
    line is dropped, and tasks are renumbered 1..n in order of appearance.

    >>> [t.title for t in parse_plan("Sure!\\n3. B: x\\n1) A").tasks]
    ['B', 'A']
    """
    entries: list[tuple[str, list[str]]] = []
    for line in completion.splitlines():
        m = NUMBERED_LINE.match(line)
        if m:
            head, sep, rest = m.group(2).partition(":")
            detail = [rest.strip()] if sep and rest.strip() else []
            entries.append((_clean_title(head), detail))
        elif entries and line.strip():
            entries[-1][1].append(line.strip())

    tasks = []
    for title, detail in entries:
        if not title:
            if not detail:
                continue
            title, detail = detail[0], detail[1:]
        tasks.append(Subtask(len(tasks) + 1, title, "\n".join(detail)))
    if not tasks:
        raise EmptyPlan("planner completion contains no numbered tasks")
    return Plan(tuple(tasks), source_text=completion)


def render_plan(plan: Plan) -> str:
    return "\n".join(task.line() for task in plan.tasks)


def plan_request(
    request: UserRequest,
    backend: Backend,
    *,
    template: PromptTemplate = PLANNER_TEMPLATE,
    params: GenerationParams | None = None,
    transcript: Transcript | None = None,
) -> Plan:
    """One planner round trip: prompt, complete, parse."""
    messages = build_planner_prompt(request, template)
    completion = ask(backend, Agent.PLANNER, messages, params, transcript=transcript)
    return parse_plan(completion)
