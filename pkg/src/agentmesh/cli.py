"""``agentmesh run``: command-line entry point.

Precedence is flags > config file > defaults. Exit status: 0 when every
task passed and the reviewer approved, 1 when the run finished with open
issues, 2 on a fatal abort (including interrupts).
"""

from __future__ import annotations

import argparse
import logging
import shlex
import signal
import sys
from dataclasses import replace
from pathlib import Path

from .errors import AgentMeshError, ConfigError
from .orchestrator import (
    EXIT_FATAL,
    BackendMode,
    config_from_mapping,
    exit_code,
    load_config_file,
    run_pipeline,
    write_outputs,
)
from .state import UserRequest

log = logging.getLogger("agentmesh")


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentmesh",
        description="Plan, code, debug and review a software request with cooperating LLM agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline on one request")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--request", help="the request text")
    source.add_argument("--request-file", type=Path, help="read the request from a file")
    run.add_argument("--config", type=Path, help="TOML file with flat RunConfig keys")
    run.add_argument("--backend", choices=[m.value for m in BackendMode])
    run.add_argument("--cassette", type=Path, help="cassette to record to or replay from")
    run.add_argument("--out", type=Path, help="output directory")
    run.add_argument("--max-fix-attempts", type=int)
    run.add_argument("--sandbox-timeout", type=float, help="seconds per sandboxed run")
    run.add_argument("--runtime-cmd", help="runtime command template containing {file}")
    run.add_argument("--main-file", help="default target file for generated code")
    run.add_argument("--harness-file", type=Path, help="script executed as the entry point during verification")
    run.add_argument("--integration-file", help="workspace file the reviewer runs as an integration test")
    run.add_argument("--model", help="model name for every agent")
    run.add_argument("--base-url", help="chat-completions endpoint base URL")
    run.add_argument("--lenient-replay", action="store_true", help="match replay records by agent role only")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args: argparse.Namespace):
    values = {}
    base_dir = None
    if args.config:
        values = load_config_file(args.config)
        base_dir = args.config.resolve().parent
    config = config_from_mapping(values, base_dir)

    overrides = {
        "backend_mode": args.backend,
        "cassette_path": args.cassette,
        "out_dir": args.out,
        "max_fix_attempts": args.max_fix_attempts,
        "main_file": args.main_file,
        "harness_file": args.harness_file,
        "integration_file": args.integration_file,
        "model": args.model,
        "base_url": args.base_url,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if args.lenient_replay:
        config.strict_replay = False
    sandbox = {}
    if args.sandbox_timeout is not None:
        sandbox["timeout"] = args.sandbox_timeout
    if args.runtime_cmd is not None:
        sandbox["runtime_command"] = shlex.split(args.runtime_cmd)
    if sandbox:
        try:
            config.sandbox = replace(config.sandbox, **sandbox)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def _raise_interrupt(signum, frame):
    raise KeyboardInterrupt


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _config(args)
        text = args.request if args.request is not None else args.request_file.read_text(encoding="utf-8")
        request = UserRequest(text)
    except (AgentMeshError, OSError) as exc:
        print(f"agentmesh: {exc}", file=sys.stderr)
        return EXIT_FATAL

    report = run_pipeline(request, config)
    try:
        write_outputs(report, config.out_dir)
    except AgentMeshError as exc:
        print(f"agentmesh: {exc}", file=sys.stderr)
        return EXIT_FATAL

    code = exit_code(report)
    for task, status in report.statuses:
        print(f"{task.index}. {task.title}: {status}")
    verdict = report.review.verdict.value if report.review else "unknown"
    print(f"verdict: {verdict}")
    if report.error:
        print(f"aborted: {report.error}", file=sys.stderr)
    print(f"outputs written to {config.out_dir}")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    previous = None
    try:
        previous = signal.signal(signal.SIGTERM, _raise_interrupt)
    except ValueError:  # not in the main thread
        pass
    try:
        return cmd_run(args)
    finally:
        if previous is not None:
            signal.signal(signal.SIGTERM, previous)


if __name__ == "__main__":
    sys.exit(main())
