"""Constraint specifications: the JSON contract for task-specific pose objectives."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

TERM_PARAMS = {
    "affordance_alignment": (),
    "position_above": ("delta",),
    "orientation_tilt": ("min_deg", "max_deg"),
    "clearance": ("d_min",),
    "contact_quality": (),
    "stability": (),
    "perpendicular": (),
    "containment": ("margin",),
    "collision": ("r_pen",),
}
TERM_TYPES = tuple(TERM_PARAMS)
BUILTIN_TASKS = ("pour", "hang", "cut", "press", "insert")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ConstraintTerm:
    type: str
    weight: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.type not in TERM_PARAMS:
            raise SpecError(f"unknown term type {self.type!r}")
        w = float(self.weight)
        if not math.isfinite(w) or w < 0:
            raise SpecError(f"term {self.type}: weight must be finite and >= 0, got {self.weight}")
        object.__setattr__(self, "weight", w)
        params = {k: float(v) for k, v in dict(self.params).items()}
        needed = TERM_PARAMS[self.type]
        missing = [k for k in needed if k not in params]
        if missing:
            raise SpecError(f"term {self.type}: missing param {missing[0]!r}")
        extra = sorted(set(params) - set(needed))
        if extra:
            raise SpecError(f"term {self.type}: unknown param {extra[0]!r}")
        for k, v in params.items():
            if not math.isfinite(v):
                raise SpecError(f"term {self.type}: param {k} must be finite")
        if self.type == "orientation_tilt" and not 0.0 <= params["min_deg"] <= params["max_deg"] <= 180.0:
            raise SpecError("term orientation_tilt: need 0 <= min_deg <= max_deg <= 180")
        for k in ("d_min", "r_pen"):
            if k in params and params[k] <= 0:
                raise SpecError(f"term {self.type}: {k} must be positive")
        object.__setattr__(self, "params", params)

    def to_dict(self) -> dict:
        return {"type": self.type, "weight": self.weight, "params": dict(self.params)}


@dataclass(frozen=True)
class ConstraintSpec:
    task: str
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise SpecError("a constraint spec needs at least one term")

    @property
    def weights(self) -> list:
        return [t.weight for t in self.terms]

    def to_dict(self) -> dict:
        return {"task": self.task, "terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintSpec":
        if not isinstance(d, dict) or "terms" not in d:
            raise SpecError("spec must be an object with 'task' and 'terms'")
        terms = []
        for i, t in enumerate(d["terms"]):
            if not isinstance(t, dict) or "type" not in t or "weight" not in t:
                raise SpecError(f"term {i}: needs 'type' and 'weight'")
            terms.append(ConstraintTerm(t["type"], t["weight"], t.get("params", {})))
        return cls(str(d.get("task", "")), tuple(terms))


def load_spec(path) -> ConstraintSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from exc
    return ConstraintSpec.from_dict(data)


def builtin_spec(task: str) -> ConstraintSpec:
    if task not in BUILTIN_TASKS:
        raise SpecError(f"no built-in spec for task {task!r}; choose from {BUILTIN_TASKS}")
    text = resources.files("ooaf.planner").joinpath("specs", f"{task}.json").read_text()
    return ConstraintSpec.from_dict(json.loads(text))


def resolve_spec(name_or_path) -> ConstraintSpec:
    """Built-in task name or path to a spec file."""
    if str(name_or_path) in BUILTIN_TASKS:
        return builtin_spec(str(name_or_path))
    return load_spec(name_or_path)
