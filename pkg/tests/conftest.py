from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))
sys.path.insert(0, str(Path(__file__).parent / "fixtures" / "case_study"))

from agentmesh.sandbox import SandboxConfig  # noqa: E402


@pytest.fixture
def py_sandbox() -> SandboxConfig:
    return SandboxConfig(runtime_command=(sys.executable, "{file}"), timeout=10)


@pytest.fixture
def sh_sandbox() -> SandboxConfig:
    """Shell-script runtime: far cheaper to spawn than Python for loop tests."""
    return SandboxConfig(runtime_command=("/bin/sh", "{file}"), timeout=5)


@pytest.fixture(autouse=True)
def _no_api_key(monkeypatch):
    monkeypatch.delenv("AGENTMESH_API_KEY", raising=False)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_RESULTS

    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, label = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  AC{number}: {label}")
