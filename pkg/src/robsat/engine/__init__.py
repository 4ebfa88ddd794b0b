"""Reformulation core."""

from .model import (
    attach_cast,
    DecisionSet,
    EvaluationFunction,
    QuadraticModel,
    SatisficingModel,
    cast_evaluation,
    lp_recourse,
    piecewise_max,
)
from .satisficing import (
    SatisficingResult,
    empirical_optimum,
    robust_counterpart,
    solve_satisficing,
)

__all__ = [
    "attach_cast",
    "DecisionSet",
    "EvaluationFunction",
    "QuadraticModel",
    "SatisficingModel",
    "SatisficingResult",
    "cast_evaluation",
    "empirical_optimum",
    "lp_recourse",
    "piecewise_max",
    "robust_counterpart",
    "solve_satisficing",
]
