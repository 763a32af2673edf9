"""Materialize a workspace to a temp directory and run it under a timeout.

Isolation is a separate process group, a scrubbed environment, a private
working directory and a wall-clock limit. Nothing stronger: no containers,
no seccomp, no resource quotas.
"""

from __future__ import annotations

import logging
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping

from .errors import SandboxIOError, SpawnError
from .prompts import SANDBOX_DIR_PREFIX
from .state import VirtualWorkspace, validate_path

log = logging.getLogger(__name__)

FILE_PLACEHOLDER = "{file}"
TRUNCATION_MARKER = "…[truncated]"
DEFAULT_TIMEOUT = 10.0
DEFAULT_CAPTURE_LIMIT = 64 * 1024
ENV_ALLOWLIST = ("PATH", "LANG", "LANGUAGE", "LC_ALL", "LC_CTYPE", "LC_MESSAGES")


@dataclass(frozen=True)
class SandboxConfig:
    runtime_command: tuple[str, ...] = (sys.executable, FILE_PLACEHOLDER)
    timeout: float = DEFAULT_TIMEOUT
    capture_limit: int = DEFAULT_CAPTURE_LIMIT
    stdin_script: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "runtime_command", tuple(self.runtime_command))
        if self.stdin_script is not None:
            object.__setattr__(self, "stdin_script", tuple(self.stdin_script))
        count = sum(arg.count(FILE_PLACEHOLDER) for arg in self.runtime_command)
        if count != 1:
            raise ValueError(
                f"runtime_command needs exactly one {FILE_PLACEHOLDER} placeholder, found {count}"
            )
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.capture_limit <= len(TRUNCATION_MARKER.encode()):
            raise ValueError("capture_limit is too small")


@dataclass(frozen=True)
class ExecutionOutcome:
    exit_code: int | None
    stdout: str
    stderr: str
    duration: float
    timed_out: bool

    @property
    def passed(self) -> bool:
        return self.exit_code == 0 and not self.timed_out


@dataclass
class MaterializedDir:
    """A temporary directory holding a workspace; removed on :meth:`release`."""

    path: Path
    released: bool = field(default=False, init=False)

    def release(self) -> None:
        if not self.released:
            shutil.rmtree(self.path, ignore_errors=True)
            self.released = True

    def __enter__(self) -> MaterializedDir:
        return self

    def __exit__(self, *exc) -> None:
        self.release()


def materialize(
    workspace: VirtualWorkspace, extra_files: Mapping[str, str] | None = None
) -> MaterializedDir:
    """Write the workspace files (plus *extra_files*, e.g. a harness) to a fresh temp dir."""
    files = dict(workspace.files)
    files.update(extra_files or {})
    root = Path(tempfile.mkdtemp(prefix=SANDBOX_DIR_PREFIX))
    handle = MaterializedDir(root)
    try:
        for rel, text in files.items():
            validate_path(rel)
            target = root / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        handle.release()
        raise SandboxIOError(f"could not materialize workspace: {exc}") from exc
    except BaseException:
        handle.release()
        raise
    return handle


class _Drain(threading.Thread):
    """Reads a pipe to EOF, keeping at most *keep* bytes."""

    def __init__(self, pipe: IO[bytes], keep: int):
        super().__init__(daemon=True)
        self.pipe = pipe
        self.keep = keep
        self.data = bytearray()
        self.error: OSError | None = None

    def run(self) -> None:
        try:
            while chunk := self.pipe.read1(65536):
                room = self.keep - len(self.data)
                if room > 0:
                    self.data += chunk[:room]
        except OSError as exc:
            self.error = exc


def _feed(pipe: IO[bytes], data: bytes) -> None:
    try:
        pipe.write(data)
    except (BrokenPipeError, OSError):
        pass
    finally:
        try:
            pipe.close()
        except OSError:
            pass


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass


def scrub_paths(text: str, root: Path) -> str:
    """Replace the sandbox location with ``.`` so output is stable across runs."""
    for variant in sorted({str(root), os.path.realpath(root)}, key=len, reverse=True):
        text = text.replace(variant, ".")
    return text


def truncate_text(text: str, limit: int) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= limit:
        return text
    keep = limit - len(TRUNCATION_MARKER.encode("utf-8"))
    return raw[:keep].decode("utf-8", "ignore") + TRUNCATION_MARKER


def sandbox_env(home: Path) -> dict[str, str]:
    env = {k: os.environ[k] for k in ENV_ALLOWLIST if k in os.environ}
    env.setdefault("PATH", os.defpath)
    env["HOME"] = str(home)
    return env


def execute(directory: MaterializedDir, entry_file: str, config: SandboxConfig) -> ExecutionOutcome:
    """Run *entry_file* inside *directory* with the configured runtime command."""
    root = directory.path
    validate_path(entry_file)
    if not (root / entry_file).is_file():
        raise SandboxIOError(f"entry file {entry_file!r} is not in the sandbox")
    argv = [arg.replace(FILE_PLACEHOLDER, entry_file) for arg in config.runtime_command]
    stdin_data = None
    if config.stdin_script is not None:
        stdin_data = "".join(line + "\n" for line in config.stdin_script).encode("utf-8")

    start = time.perf_counter()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=root,
            env=sandbox_env(root),
            stdin=subprocess.PIPE if stdin_data is not None else subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,
        )
    except OSError as exc:
        raise SpawnError(f"cannot run {argv[0]!r}: {exc}") from exc

    keep = config.capture_limit * 2 + 4096
    drains = [_Drain(proc.stdout, keep), _Drain(proc.stderr, keep)]
    for d in drains:
        d.start()
    if stdin_data is not None:
        threading.Thread(target=_feed, args=(proc.stdin, stdin_data), daemon=True).start()

    timed_out = False
    try:
        proc.wait(timeout=config.timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        log.info("sandbox run of %s timed out after %.1fs", entry_file, config.timeout)
    finally:
        # Take down the whole group, including children that outlived the parent.
        _kill_group(proc)
        proc.wait()
    for d in drains:
        d.join(timeout=1.0)
    duration = time.perf_counter() - start
    for d in drains:
        if d.error is not None:
            raise SandboxIOError(f"failed to capture output: {d.error}")

    def text(d: _Drain) -> str:
        decoded = bytes(d.data).decode("utf-8", "replace")
        return truncate_text(scrub_paths(decoded, root), config.capture_limit)

    return ExecutionOutcome(
        exit_code=None if timed_out else proc.returncode,
        stdout=text(drains[0]),
        stderr=text(drains[1]),
        duration=duration,
        timed_out=timed_out,
    )


def run_workspace(
    workspace: VirtualWorkspace,
    entry_file: str,
    config: SandboxConfig,
    extra_files: Mapping[str, str] | None = None,
) -> ExecutionOutcome:
    """Materialize, execute, and clean up in one call."""
    with materialize(workspace, extra_files) as directory:
        return execute(directory, entry_file, config)
