"""Inexact infeasible arc-search interior-point LP solver with line-search and exact baselines."""

from .lp_model import (
    DegenerateProblemError,
    InfeasibleModelError,
    Iterate,
    LPModelError,
    StandardFormLP,
    load_problem,
    preprocess,
    to_standard_form,
)
from .mps import MPSError, parse_mps, read_mps
from .solver import METHODS, IterationRecord, SolveResult, SolverConfig, Status, solve

__version__ = "0.1.0"

__all__ = [
    "DegenerateProblemError",
    "InfeasibleModelError",
    "Iterate",
    "IterationRecord",
    "LPModelError",
    "METHODS",
    "MPSError",
    "SolveResult",
    "SolverConfig",
    "StandardFormLP",
    "Status",
    "load_problem",
    "parse_mps",
    "preprocess",
    "read_mps",
    "solve",
    "to_standard_form",
]
