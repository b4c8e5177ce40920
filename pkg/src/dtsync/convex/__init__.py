from .barrier import (
    ConstraintBlock,
    SmoothConvexProgram,
    barrier_solve,
    find_interior,
    kkt_residual,
    linear_block,
)
from .simplex import LinearProgram, simplex_solve
from .status import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, SolveStatus

__all__ = [
    "ConstraintBlock",
    "LinearProgram",
    "SmoothConvexProgram",
    "SolveStatus",
    "barrier_solve",
    "find_interior",
    "kkt_residual",
    "linear_block",
    "simplex_solve",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "ITERATION_LIMIT",
]
