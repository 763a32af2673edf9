"""Run small programs in the sandbox: a pass, a crash, and a runaway loop."""

from __future__ import annotations

from agentmesh import SandboxConfig, VirtualWorkspace
from agentmesh.sandbox import run_workspace

config = SandboxConfig(timeout=1.0)

programs = {
    "ok.py": "print('hello from the sandbox')",
    "crash.py": "open('missing.txt')",
    "spin.py": "while True:\n    pass",
}

for name, code in programs.items():
    outcome = run_workspace(VirtualWorkspace({name: code}), name, config)
    tail = (outcome.stderr or outcome.stdout).strip().splitlines()[-1:] or [""]
    print(f"{name:9} exit={outcome.exit_code!s:4} timed_out={outcome.timed_out!s:5} "
          f"{outcome.duration:.2f}s  {tail[0]}")
