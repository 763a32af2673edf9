"""The fixed pipeline: plan, then code and debug each task, then review.

::

    plan = planner(request)
    for task in plan:
        contribution = coder(task)
        result = debugger(contribution)
        workspace = apply_update(workspace, result.final_files)
    report = reviewer(workspace)
"""

from __future__ import annotations

import json
import logging
import shlex
import shutil
import sys
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .coder import DEFAULT_CONTEXT_BUDGET, DEFAULT_MAIN_FILE, generate_code
from .debugger import DEFAULT_MAX_FIX_ATTEMPTS, debug_task
from .errors import AgentMeshError, ConfigError, EmptyContribution, InvalidPath, OutputError
from .gateway import (
    DEFAULT_BASE_URL,
    DEFAULT_MODEL,
    Backend,
    GenerationParams,
    LiveBackend,
    RecordingBackend,
    ReplayBackend,
)
from .planner import plan_request, render_plan
from .prompts import DEFAULT_TEMPLATES, PromptTemplate
from .reviewer import IntegrationConfig, ReviewReport, Verdict, review
from .sandbox import SandboxConfig
from .state import (
    Agent,
    EventKind,
    RunReport,
    StatusKind,
    TaskStatus,
    Transcript,
    UserRequest,
    VirtualWorkspace,
    apply_update,
    transcript_to_jsonl,
    validate_path,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ATTENTION = 1
EXIT_FATAL = 2

ROLES = ("planner", "coder", "debugger", "reviewer")


class BackendMode(str, Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass
class RunConfig:
    backend_mode: BackendMode = BackendMode.LIVE
    cassette_path: Path | None = None
    strict_replay: bool = True
    base_url: str = DEFAULT_BASE_URL
    model: str = DEFAULT_MODEL
    models: dict[str, str] = field(default_factory=dict)
    temperature: float = 0.0
    max_output_tokens: int = 2048
    max_fix_attempts: int = DEFAULT_MAX_FIX_ATTEMPTS
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    main_file: str = DEFAULT_MAIN_FILE
    harness_file: Path | None = None
    integration_file: str | None = None
    out_dir: Path = Path("agentmesh-out")
    templates: dict[str, Path] = field(default_factory=dict)
    context_budget: int = DEFAULT_CONTEXT_BUDGET

    def validate(self) -> None:
        self.backend_mode = BackendMode(self.backend_mode)
        if self.backend_mode in (BackendMode.RECORD, BackendMode.REPLAY) and not self.cassette_path:
            raise ConfigError(f"{self.backend_mode.value} mode needs a cassette path")
        if self.max_fix_attempts < 0:
            raise ConfigError("max_fix_attempts must be >= 0")
        if self.context_budget <= 0:
            raise ConfigError("context_budget must be positive")
        unknown = (set(self.models) | set(self.templates)) - set(ROLES)
        if unknown:
            raise ConfigError(f"unknown agent role(s): {sorted(unknown)}")
        validate_path(self.main_file)
        if self.integration_file:
            validate_path(self.integration_file)

    def params_for(self, role: str) -> GenerationParams:
        return GenerationParams(
            model_name=self.models.get(role, self.model),
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
        )

    def template_for(self, role: str) -> PromptTemplate:
        base = DEFAULT_TEMPLATES[role]
        path = self.templates.get(role)
        return base.with_file(path) if path else base


_SANDBOX_KEYS = {
    "sandbox_timeout": "timeout",
    "runtime_command": "runtime_command",
    "capture_limit": "capture_limit",
    "stdin_script": "stdin_script",
}
_PATH_KEYS = {"cassette_path", "harness_file", "out_dir"}


def config_from_mapping(values: Mapping[str, Any], base_dir: Path | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from flat keys (a parsed config file).

    ``model_<role>`` and ``template_<role>`` set per-role entries; the
    sandbox keys are ``sandbox_timeout``, ``runtime_command``,
    ``capture_limit`` and ``stdin_script``. Relative paths resolve against
    *base_dir*.
    """
    def resolve(p: Any) -> Path:
        path = Path(p)
        return path if path.is_absolute() or base_dir is None else base_dir / path

    config = RunConfig()
    known = {f.name for f in fields(RunConfig)} - {"sandbox", "models", "templates"}
    sandbox_kwargs: dict[str, Any] = {}
    for key, value in values.items():
        if key in _SANDBOX_KEYS:
            if key == "runtime_command" and isinstance(value, str):
                value = shlex.split(value)
            sandbox_kwargs[_SANDBOX_KEYS[key]] = value
        elif key.startswith("model_"):
            config.models[key[len("model_") :]] = str(value)
        elif key.startswith("template_"):
            config.templates[key[len("template_") :]] = resolve(value)
        elif key in known:
            setattr(config, key, resolve(value) if key in _PATH_KEYS else value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if sandbox_kwargs:
        try:
            config.sandbox = replace(config.sandbox, **sandbox_kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad sandbox settings: {exc}") from exc
    return config


def load_config_file(path: str | Path) -> dict[str, Any]:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def build_backend(config: RunConfig) -> Backend:
    if config.backend_mode is BackendMode.REPLAY:
        try:
            return ReplayBackend.from_file(config.cassette_path, strict=config.strict_replay)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load cassette {config.cassette_path}: {exc}") from exc
    live = LiveBackend(config.base_url)
    if config.backend_mode is BackendMode.RECORD:
        return RecordingBackend(live, config.cassette_path)
    return live


def _harness_files(config: RunConfig) -> tuple[str | None, dict[str, str]]:
    if config.harness_file is None:
        return None, {}
    path = Path(config.harness_file)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read harness {path}: {exc}") from exc
    return path.name, {path.name: text}


def run_pipeline(
    request: UserRequest,
    config: RunConfig,
    backend: Backend | None = None,
    transcript: Transcript | None = None,
) -> RunReport:
    """Execute one full run. Never raises for pipeline failures.

    Fatal problems (empty plan, backend or cassette errors outside the
    debug/review stages, sandbox spawn failures, interrupts) stop the run
    and come back as a report with ``complete=False``.
    """
    config.validate()
    transcript = transcript if transcript is not None else Transcript()
    workspace = VirtualWorkspace()
    plan = None
    statuses: list = []
    report: ReviewReport | None = None

    def note(payload: dict, task_index: int | None = None) -> None:
        transcript.emit(Agent.ORCHESTRATOR, EventKind.STATE_UPDATE, payload, task_index)

    def partial(error: str) -> RunReport:
        return RunReport(plan, statuses, report, transcript.events, workspace, complete=False, error=error)

    try:
        if backend is None:
            backend = build_backend(config)
        harness_name, harness_files = _harness_files(config)
        plan = plan_request(
            request,
            backend,
            template=config.template_for("planner"),
            params=config.params_for("planner"),
            transcript=transcript,
        )
        workspace.artifacts["plan"] = render_plan(plan)
        note({"artifact": "plan", "tasks": [t.title for t in plan.tasks]})

        for task in plan.tasks:
            try:
                contribution = generate_code(
                    task,
                    plan,
                    workspace,
                    backend,
                    template=config.template_for("coder"),
                    context_budget=config.context_budget,
                    main_file=config.main_file,
                    params=config.params_for("coder"),
                    transcript=transcript,
                )
            except EmptyContribution:
                status = TaskStatus.skipped("no code produced")
                statuses.append((task, status))
                note({"status": str(status), "files": []}, task.index)
                continue
            except InvalidPath as exc:
                status = TaskStatus.needs_attention(f"invalid contribution: {exc}")
                statuses.append((task, status))
                note({"status": str(status), "files": []}, task.index)
                continue

            result = debug_task(
                workspace,
                contribution,
                harness_name or contribution.primary_path,
                backend,
                config.max_fix_attempts,
                config.sandbox,
                extra_files=harness_files,
                template=config.template_for("debugger"),
                params=config.params_for("debugger"),
                transcript=transcript,
                task_index=task.index,
            )
            workspace = apply_update(workspace, result.final_files)
            statuses.append((task, result.status))
            note({"status": str(result.status), "files": sorted(result.final_files)}, task.index)
            log.info("task %d %s: %s", task.index, task.title, result.status)

        if workspace.files:
            integration = None
            if config.integration_file:
                integration = IntegrationConfig(config.integration_file, config.sandbox)
            report = review(
                request,
                plan,
                workspace,
                backend,
                integration,
                template=config.template_for("reviewer"),
                params=config.params_for("reviewer"),
                transcript=transcript,
            )
        else:
            report = ReviewReport("No code was produced; nothing to review.", Verdict.UNKNOWN)
        note({"verdict": report.verdict.value})
    except AgentMeshError as exc:
        transcript.emit(
            Agent.ORCHESTRATOR, EventKind.ERROR, {"error": type(exc).__name__, "message": str(exc)}
        )
        log.error("run aborted: %s: %s", type(exc).__name__, exc)
        return partial(f"{type(exc).__name__}: {exc}")
    except KeyboardInterrupt:
        transcript.emit(Agent.ORCHESTRATOR, EventKind.ERROR, {"error": "Interrupted", "message": "interrupted"})
        return partial("Interrupted")
    return RunReport(plan, statuses, report, transcript.events, workspace)


def exit_code(report: RunReport) -> int:
    if not report.complete:
        return EXIT_FATAL
    all_ok = all(status.ok for _, status in report.statuses)
    if all_ok and report.review is not None and report.review.verdict is Verdict.APPROVED:
        return EXIT_OK
    return EXIT_ATTENTION


def summarize(report: RunReport) -> dict[str, Any]:
    """Machine-readable run summary (the ``report.json`` body)."""
    kinds = [status.kind for _, status in report.statuses]
    llm_calls = {role.value: 0 for role in (Agent.PLANNER, Agent.CODER, Agent.DEBUGGER, Agent.REVIEWER)}
    verifications = 0
    for event in report.transcript:
        if event.event_kind is EventKind.PROMPT_SENT:
            llm_calls[event.agent.value] += 1
        elif event.event_kind is EventKind.EXECUTION_RUN and event.task_index is not None:
            verifications += 1
    integration = None
    if report.review is not None and report.review.integration_outcome is not None:
        outcome = report.review.integration_outcome
        integration = {"exit_code": outcome.exit_code, "timed_out": outcome.timed_out, "passed": outcome.passed}
    return {
        "complete": report.complete,
        "error": report.error,
        "exit_code": exit_code(report),
        "verdict": report.review.verdict.value if report.review else Verdict.UNKNOWN.value,
        "tasks": [
            {
                "index": task.index,
                "title": task.title,
                "status": status.kind.value,
                "fix_attempts": status.fix_attempts,
                "reason": status.reason,
            }
            for task, status in report.statuses
        ],
        "counts": {
            "tasks": len(report.plan) if report.plan else 0,
            **{kind.value: kinds.count(kind) for kind in StatusKind},
            "fix_attempts": sum(s.fix_attempts for _, s in report.statuses),
            "verifications": verifications,
            "llm_calls": llm_calls,
        },
        "files": sorted(report.final_workspace.files),
        "integration": integration,
    }


def write_outputs(report: RunReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        src = out / "src"
        if src.exists():
            shutil.rmtree(src)
        src.mkdir()
        for rel, text in sorted(report.final_workspace.files.items()):
            target = src / validate_path(rel)
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        plan_text = render_plan(report.plan) + "\n" if report.plan else ""
        (out / "plan.md").write_text(plan_text, encoding="utf-8")
        review_text = report.review.text.rstrip("\n") + "\n" if report.review else ""
        (out / "review.md").write_text(review_text, encoding="utf-8")
        (out / "transcript.jsonl").write_text(transcript_to_jsonl(report.transcript), encoding="utf-8")
        (out / "report.json").write_text(
            json.dumps(summarize(report), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise OutputError(f"cannot write outputs to {out}: {exc}") from exc
