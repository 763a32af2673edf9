"""Cooperative planner/coder/debugger/reviewer agents for code generation."""

from .coder import CodeContribution, build_coder_prompt, extract_contribution
from .debugger import DebugResult, build_fix_prompt, debug_task, verify
from .errors import (
    AgentMeshError,
    CassetteExhausted,
    CassetteMismatch,
    EmptyContribution,
    EmptyPlan,
    InvalidPath,
    RateLimited,
    SpawnError,
    TemplateError,
    TransportError,
)
from .gateway import (
    ChatMessage,
    CompletionRequest,
    GenerationParams,
    LiveBackend,
    RecordingBackend,
    ReplayBackend,
    Role,
    complete,
    prompt_digest,
    retry_schedule,
)
from .orchestrator import BackendMode, RunConfig, exit_code, run_pipeline, write_outputs
from .planner import build_planner_prompt, parse_plan, render_plan
from .reviewer import ReviewReport, Verdict, build_review_prompt, parse_verdict, review
from .sandbox import ExecutionOutcome, SandboxConfig, execute, materialize
from .state import (
    Agent,
    Plan,
    RunReport,
    Subtask,
    TaskStatus,
    UserRequest,
    VirtualWorkspace,
    apply_update,
    render_codebase,
)

__version__ = "0.1.0"
