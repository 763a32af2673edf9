"""Behavioural checks for todo.py, used as the verification entry point.

Each block only runs once the function it exercises exists, so the same
harness works after every task.
"""
import builtins
import contextlib
import io
import os

import todo


def fresh():
    todo.tasks.clear()


def captured(fn, *args):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        fn(*args)
    return buf.getvalue()


if hasattr(todo, "add_task"):
    fresh()
    todo.add_task("Test Task")
    assert len(todo.tasks) == 1, "add_task did not grow the task list"
    assert todo.tasks[0].description == "Test Task" and not todo.tasks[0].done

if hasattr(todo, "list_tasks"):
    fresh()
    todo.add_task("first")
    todo.add_task("second")
    todo.tasks[1].done = True
    out = captured(todo.list_tasks)
    assert "1. [ ] first" in out and "2. [x] second" in out, out

if hasattr(todo, "mark_done"):
    fresh()
    todo.add_task("first")
    todo.add_task("second")
    todo.mark_done(1)
    assert todo.tasks[0].done, "mark_done(1) did not mark the first task as done"
    assert not todo.tasks[1].done, "mark_done(1) marked the wrong task"

if hasattr(todo, "remove_task"):
    fresh()
    todo.add_task("first")
    todo.add_task("second")
    todo.remove_task(1)
    assert [t.description for t in todo.tasks] == ["second"]

if hasattr(todo, "save_tasks") and hasattr(todo, "load_tasks"):
    fresh()
    if os.path.exists("tasks.txt"):
        os.remove("tasks.txt")
    todo.load_tasks("tasks.txt")  # first start: nothing saved yet
    assert todo.tasks == []
    todo.add_task("Buy milk")
    todo.add_task("Walk dog")
    todo.mark_done(1)
    todo.save_tasks("tasks.txt")
    fresh()
    todo.load_tasks("tasks.txt")
    assert [(t.description, t.done) for t in todo.tasks] == [("Buy milk", True), ("Walk dog", False)]
    os.remove("tasks.txt")

if hasattr(todo, "main"):
    def scripted(*commands):
        answers = iter(commands)
        builtins.input = lambda prompt="": next(answers)
        return captured(todo.main)

    fresh()
    scripted("add Buy milk", "add Walk dog", "done 1", "remove 2", "list", "quit")
    # reset in-memory state, as a real restart would
    fresh()
    out = scripted("list", "quit")
    assert "1. [x] Buy milk" in out and "Walk dog" not in out, out
    os.remove("tasks.txt")

print("all checks passed")
