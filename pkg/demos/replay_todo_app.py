"""Replay the to-do app walkthrough offline and show what came out.

Run from the repository root:

    python demos/replay_todo_app.py [OUT_DIR]
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

from agentmesh.cli import main

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "case_study"


def run(out: Path) -> int:
    code = main([
        "run",
        "--request-file", str(FIXTURE / "request.txt"),
        "--config", str(FIXTURE / "agentmesh.toml"),
        "--out", str(out),
    ])
    summary = json.loads((out / "report.json").read_text(encoding="utf-8"))
    print()
    print(f"exit code {code}, {summary['counts']['fix_attempts']} fixes over "
          f"{summary['counts']['verifications']} verification runs")
    print("llm calls:", summary["counts"]["llm_calls"])

    # the debugger's two repairs are visible in the transcript
    for line in (out / "transcript.jsonl").read_text(encoding="utf-8").splitlines():
        event = json.loads(line)
        if event["agent"] == "Debugger" and event["event_kind"] == "PromptSent":
            error = event["payload"]["messages"][-1]["content"].split("Error:\n", 1)[1]
            print(f"\ntask {event['task_index']} failed with:\n  " + error.splitlines()[-3])
    return code


if __name__ == "__main__":
    if len(sys.argv) > 1:
        sys.exit(run(Path(sys.argv[1])))
    with tempfile.TemporaryDirectory() as tmp:
        sys.exit(run(Path(tmp)))
