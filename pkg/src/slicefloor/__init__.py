"""Slicing-tree floorplanning: exact dead-space scoring, optimal dataset
generation, exhaustive and annealing solvers, and an evaluation harness for
model-generated slicing expressions."""

from .core import (
    Cut,
    CutKind,
    Envelope,
    EvalResult,
    Leaf,
    ModuleDef,
    Placement,
    evaluate,
    is_optimal,
    merge,
    pair_dead_space,
    place,
)
from .encoding import (
    ParseError,
    ParseErrorKind,
    format_module_list,
    parse_module_list,
    parse_slicing_expr,
    serialize_slicing_expr,
)

__version__ = "0.1.0"
