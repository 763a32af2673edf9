"""How planner output turns into tasks, including messy model replies."""

from __future__ import annotations

from agentmesh import parse_plan, render_plan

reply = """Sure! Here's a plan:

1. **Set up project**: create the package layout
   and a pyproject file
2) Parse input: read CSV rows
3. Write tests
"""

plan = parse_plan(reply)
for task in plan:
    print(f"[{task.index}] {task.title!r}  detail={task.detail!r}")

# the rendered form is what later agents see; it parses back to the same tasks
canonical = render_plan(plan)
print("\n" + canonical)
assert parse_plan(canonical).tasks == plan.tasks
