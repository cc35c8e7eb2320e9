"""Affordance-conditioned pose optimization driven by declarative constraint specs."""

from .solver import OptimizationResult, SolveOptions, params_to_transform, solve
from .spec import (
    BUILTIN_TASKS,
    TERM_TYPES,
    ConstraintSpec,
    ConstraintTerm,
    SpecError,
    builtin_spec,
    load_spec,
    resolve_spec,
)
from .terms import DegenerateRegionError, Scene, eval_term, high_affordance_region, objective, weighted_centroid

__all__ = [
    "BUILTIN_TASKS",
    "TERM_TYPES",
    "ConstraintSpec",
    "ConstraintTerm",
    "DegenerateRegionError",
    "OptimizationResult",
    "Scene",
    "SolveOptions",
    "SpecError",
    "builtin_spec",
    "eval_term",
    "high_affordance_region",
    "load_spec",
    "objective",
    "params_to_transform",
    "resolve_spec",
    "solve",
    "weighted_centroid",
]
