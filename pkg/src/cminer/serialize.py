"""JSON schemas for trajectories, demonstrations, parameters, and datasets.

Every file carries a ``schema_version`` field.  All numeric payloads are
plain JSON arrays of numbers; boxes serialize as ``{"lo": [...], "hi": [...]}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .core import Box, BoxUnionParam, Demonstration, Task, Trajectory

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """File does not match the expected JSON schema."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaError(msg)


def check_version(doc: dict, what: str) -> None:
    _require(isinstance(doc, dict), f"{what}: top level must be an object")
    _require("schema_version" in doc, f"{what}: missing schema_version")
    _require(doc["schema_version"] == SCHEMA_VERSION,
             f"{what}: unsupported schema_version {doc['schema_version']!r}")


# -- individual objects ------------------------------------------------------

def box_to_json(box: Box) -> dict:
    return {"lo": list(box.lo), "hi": list(box.hi)}


def box_from_json(doc: Any, what: str = "box") -> Box:
    _require(isinstance(doc, dict) and "lo" in doc and "hi" in doc,
             f"{what}: expected object with lo/hi")
    return Box(tuple(doc["lo"]), tuple(doc["hi"]))


def param_to_json(param: BoxUnionParam) -> dict:
    out = {
        "boxes": [box_to_json(b) for b in param.boxes],
        "bounds": box_to_json(param.bounds),
        "complement": param.complement,
    }
    if param.min_side is not None:
        out["min_side"] = param.min_side
    return out


def param_from_json(doc: Any, what: str = "param") -> BoxUnionParam:
    _require(isinstance(doc, dict) and "boxes" in doc and "bounds" in doc,
             f"{what}: expected object with boxes/bounds")
    return BoxUnionParam(
        boxes=tuple(box_from_json(b, f"{what}.boxes") for b in doc["boxes"]),
        bounds=box_from_json(doc["bounds"], f"{what}.bounds"),
        min_side=doc.get("min_side"),
        complement=bool(doc.get("complement", False)),
    )


def trajectory_to_json(traj: Trajectory) -> dict:
    return {
        "states": [list(s) for s in traj.states],
        "controls": [list(u) for u in traj.controls],
        "cost": traj.cost,
    }


def trajectory_from_json(doc: Any, what: str = "trajectory") -> Trajectory:
    _require(isinstance(doc, dict), f"{what}: expected object")
    for key in ("states", "controls", "cost"):
        _require(key in doc, f"{what}: missing field {key!r}")
    try:
        return Trajectory(
            states=tuple(tuple(s) for s in doc["states"]),
            controls=tuple(tuple(u) for u in doc["controls"]),
            cost=float(doc["cost"]),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{what}: {exc}") from exc


def demonstration_to_json(demo: Demonstration) -> dict:
    return {
        "trajectory": trajectory_to_json(demo.trajectory),
        "suboptimality": demo.suboptimality,
    }


def demonstration_from_json(doc: Any, what: str = "demonstration") -> Demonstration:
    _require(isinstance(doc, dict) and "trajectory" in doc,
             f"{what}: expected object with trajectory")
    return Demonstration(
        trajectory=trajectory_from_json(doc["trajectory"], f"{what}.trajectory"),
        suboptimality=float(doc.get("suboptimality", 0.0)),
    )


def task_to_json(task: Task) -> dict:
    return {
        "start": list(task.start),
        "goal": list(task.goal),
        "goal_tolerance": task.goal_tolerance,
        "horizon": task.horizon,
    }


def task_from_json(doc: Any, what: str = "task") -> Task:
    _require(isinstance(doc, dict), f"{what}: expected object")
    for key in ("start", "goal", "goal_tolerance", "horizon"):
        _require(key in doc, f"{what}: missing field {key!r}")
    return Task(start=tuple(doc["start"]), goal=tuple(doc["goal"]),
                goal_tolerance=float(doc["goal_tolerance"]),
                horizon=int(doc["horizon"]))


# -- files -------------------------------------------------------------------

def dump_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(canonical_json(doc) + "\n")


def canonical_json(doc: dict) -> str:
    """Deterministic serialization: sorted keys, fixed separators."""
    return json.dumps(doc, sort_keys=True, indent=1)


def load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


def demos_file_to_json(demos: list[Demonstration], tasks: list[Task],
                       env_doc: dict, provenance: str = "") -> dict:
    if len(demos) != len(tasks):
        raise ValueError("one task per demonstration required")
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "demonstrations",
        "provenance": provenance,
        "env": env_doc,
        "tasks": [task_to_json(t) for t in tasks],
        "demonstrations": [demonstration_to_json(d) for d in demos],
    }


def demos_file_from_json(doc: dict) -> tuple[list[Demonstration], list[Task], dict]:
    check_version(doc, "demonstrations file")
    _require(doc.get("kind") == "demonstrations",
             "demonstrations file: kind must be 'demonstrations'")
    for key in ("env", "tasks", "demonstrations"):
        _require(key in doc, f"demonstrations file: missing field {key!r}")
    demos = [demonstration_from_json(d, f"demonstrations[{i}]")
             for i, d in enumerate(doc["demonstrations"])]
    tasks = [task_from_json(t, f"tasks[{i}]") for i, t in enumerate(doc["tasks"])]
    _require(len(demos) == len(tasks),
             "demonstrations file: tasks and demonstrations must align")
    return demos, tasks, doc["env"]
