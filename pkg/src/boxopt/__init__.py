"""Box-constrained limited-memory quasi-Newton solver with an augmented
Lagrangian outer loop and a small modeling language."""

from .auglag import (
    AuglagConfig,
    AuglagResult,
    ConstrainedProblem,
    Multipliers,
    auglag_value_grad,
    kkt_residuals,
    solve,
)
from .kernels import BoxBounds, DimensionError, clip_to_box
from .solver import SolverConfig, SolverResult, Status, minimize

__version__ = "0.1.0"

__all__ = [
    "AuglagConfig",
    "AuglagResult",
    "BoxBounds",
    "ConstrainedProblem",
    "DimensionError",
    "Multipliers",
    "SolverConfig",
    "SolverResult",
    "Status",
    "auglag_value_grad",
    "clip_to_box",
    "kkt_residuals",
    "minimize",
    "solve",
]
