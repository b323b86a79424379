"""Limited-memory BFGS for box constraints without a Cauchy-point search.

Each iteration fixes the variables that sit (within ``eps_active``) on a bound
with the gradient pointing outward, builds an L-BFGS direction on the
remaining free set with per-iteration curvature screening, projects that
direction back onto the box, and takes an Armijo backtracking step capped by
the largest feasible step length. All of it is componentwise arithmetic plus
dot products, with no sequential breakpoint search.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, NamedTuple, Optional

import numpy as np

from .kernels import BoxBounds, DimensionError, as_vector, clip_to_box, inf_norm, masked

logger = logging.getLogger(__name__)

Oracle = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class EvaluationError(RuntimeError):
    """The objective returned a non-finite value or failed to evaluate."""


class LineSearchFailure(RuntimeError):
    """No step length satisfied the sufficient-decrease condition."""


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    LINE_SEARCH_FAILURE = "LineSearchFailure"


class Branch(str, Enum):
    PROJECTED = "Projected"
    TRUNCATED = "Truncated"


@dataclass(frozen=True)
class SolverConfig:
    eps_active: float = 1e-9
    memory_m: int = 10
    armijo_c1: float = 1e-4
    backtrack_shrink: float = 0.5
    max_backtracks: int = 50
    tol: float = 1e-6
    max_iters: int = 10_000

    def __post_init__(self):
        if not self.eps_active > 0:
            raise ValueError("eps_active must be positive")
        if self.memory_m < 0:
            raise ValueError("memory_m must be non-negative")
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0 < self.backtrack_shrink < 1:
            raise ValueError("backtrack_shrink must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


class CurvaturePair(NamedTuple):
    s: np.ndarray
    y: np.ndarray


class HistoryBuffer:
    """Ring buffer of the last ``m`` curvature pairs, oldest first.

    Pairs are kept regardless of their curvature; screening happens against
    the working set when the direction is computed. Zero steps are dropped.
    """

    def __init__(self, m: int):
        self.m = m
        self._pairs: deque[CurvaturePair] = deque(maxlen=m) if m > 0 else deque(maxlen=0)

    def push(self, s, y) -> bool:
        s = as_vector(s, "s")
        y = as_vector(y, "y")
        if len(s) != len(y):
            raise DimensionError(f"pair length mismatch: s={len(s)}, y={len(y)}")
        if self.m == 0 or not np.any(s):
            return False
        self._pairs.append(CurvaturePair(s, y))
        return True

    def clear(self) -> None:
        self._pairs.clear()

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self) -> Iterator[CurvaturePair]:
        return iter(self._pairs)

    def __getitem__(self, i: int) -> CurvaturePair:
        return self._pairs[i]


@dataclass
class SolverResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    grad_norm: float  # infinity norm of the gradient on the final working set
    iterations: int
    status: Status
    evaluations: int = 0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


class CountingOracle:
    """Wraps ``fun(x) -> (f, grad)``, counts calls and rejects non-finite output."""

    def __init__(self, fun: Oracle, n: int):
        self.fun = fun
        self.n = n
        self.evaluations = 0

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        self.evaluations += 1
        f, g = self.fun(x)
        f = float(f)
        g = as_vector(g, "gradient")
        if len(g) != self.n:
            raise DimensionError(f"gradient has length {len(g)}, expected {self.n}")
        if not np.isfinite(f):
            raise EvaluationError(f"objective value is {f}")
        if not np.all(np.isfinite(g)):
            raise EvaluationError("gradient has non-finite entries")
        return f, g


def compute_working_set(x, grad, bounds: BoxBounds, eps: float) -> np.ndarray:
    """Boolean mask of free variables.

    A variable is fixed when it lies within ``eps`` of its lower bound with a
    non-negative gradient, or within ``eps`` of its upper bound with a
    non-positive gradient.
    """
    x = as_vector(x)
    grad = as_vector(grad, "grad")
    if not len(x) == len(grad) == len(bounds):
        raise DimensionError(f"x={len(x)}, grad={len(grad)}, bounds={len(bounds)}")
    at_lower = (x <= bounds.lower + eps) & (grad >= 0)
    at_upper = (x >= bounds.upper - eps) & (grad <= 0)
    return ~(at_lower | at_upper)


def two_loop_direction(grad, history: HistoryBuffer, s_set, eps: float) -> np.ndarray:
    """L-BFGS direction ``-H grad`` restricted to the free set ``s_set``.

    A stored pair takes part only if its curvature on the free set passes
    ``<s[S], y[S]> > eps * ||y[S]||^2``. The initial scaling uses the newest
    participating pair. With no participating pair the result is steepest
    descent on the free set. Entries outside ``s_set`` are exactly zero.
    """
    mask = np.asarray(s_set, dtype=bool)
    q = masked(grad, mask)
    n = len(q)
    if len(history) == 0:
        return -q
    pairs = list(history)
    for pair in pairs:
        if len(pair.s) != n:
            raise DimensionError(f"stored pair has length {len(pair.s)}, gradient {n}")

    # newest first, masked to the free set in one pass
    s_mat = np.stack([p.s for p in reversed(pairs)]) * mask
    y_mat = np.stack([p.y for p in reversed(pairs)]) * mask
    rhos = np.einsum("ij,ij->i", s_mat, y_mat)
    yys = np.einsum("ij,ij->i", y_mat, y_mat)
    keep = np.flatnonzero(rhos > eps * yys)
    if keep.size == 0:
        return -q

    alphas = np.empty(keep.size)
    for j, i in enumerate(keep):
        alphas[j] = float(np.dot(s_mat[i], q)) / rhos[i]
        q -= alphas[j] * y_mat[i]

    q *= rhos[keep[0]] / yys[keep[0]]

    for j in range(keep.size - 1, -1, -1):
        i = keep[j]
        beta = float(np.dot(y_mat[i], q)) / rhos[i]
        q += (alphas[j] - beta) * s_mat[i]

    return -q


def project_direction(x, grad, d, bounds: BoxBounds, eps: float) -> tuple[np.ndarray, Branch]:
    """Turn the quasi-Newton direction into a feasible search direction.

    First try the projected step ``clip(x + d) - x``; keep it if it is a
    sufficiently steep descent direction of non-negligible length. Otherwise
    fall back to ``d`` with the components that would immediately leave the
    box zeroed.
    """
    x = as_vector(x)
    grad = as_vector(grad, "grad")
    d = as_vector(d, "d")
    if not len(x) == len(grad) == len(d) == len(bounds):
        raise DimensionError(f"x={len(x)}, grad={len(grad)}, d={len(d)}, bounds={len(bounds)}")

    p = clip_to_box(x + d, bounds) - x
    pp = float(np.dot(p, p))
    if float(np.dot(p, grad)) <= -eps * pp and pp >= eps:
        return p, Branch.PROJECTED

    p = d.copy()
    p[(d < 0) & (x <= bounds.lower + eps)] = 0.0
    p[(d > 0) & (x >= bounds.upper - eps)] = 0.0
    return p, Branch.TRUNCATED


def max_feasible_step(x, p, bounds: BoxBounds, projected: bool = False) -> float:
    """Largest ``alpha >= 0`` keeping ``x + alpha * p`` inside the box.

    A projected direction already ends on a feasible point, so its cap is 1.
    Returns ``inf`` when no coordinate blocks.
    """
    if projected:
        return 1.0
    x = as_vector(x)
    p = as_vector(p, "p")
    up = (p > 0) & np.isfinite(bounds.upper)
    lo = (p < 0) & np.isfinite(bounds.lower)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(up, (bounds.upper - x) / p, np.inf)
        ratios = np.where(lo, (bounds.lower - x) / p, ratios)
    step = float(np.min(ratios)) if len(ratios) else np.inf
    return max(step, 0.0)


def armijo_backtrack(
    oracle: Oracle,
    x,
    f: float,
    grad,
    p,
    alpha_max: float,
    cfg: SolverConfig,
    bounds: Optional[BoxBounds] = None,
) -> tuple[float, np.ndarray, float, np.ndarray]:
    """Backtracking line search on the Armijo condition.

    Starts at ``min(1, alpha_max)`` and shrinks by ``cfg.backtrack_shrink``
    on each rejection. Trial points are re-clipped to ``bounds`` when given.
    Trial points where the objective cannot be evaluated count as rejections.

    Raises
    ------
    LineSearchFailure
        If ``p`` is not a descent direction or ``cfg.max_backtracks`` trial
        steps are rejected.
    """
    slope = float(np.dot(grad, p))
    if not slope < 0:
        raise LineSearchFailure(f"not a descent direction (slope {slope:.3e})")
    if not alpha_max > 0:
        raise LineSearchFailure("step length cap is zero")

    alpha = min(1.0, alpha_max)
    for _ in range(cfg.max_backtracks):
        x_new = x + alpha * p
        if bounds is not None:
            x_new = clip_to_box(x_new, bounds)
        try:
            f_new, g_new = oracle(x_new)
        except EvaluationError:
            f_new, g_new = np.inf, None
        if f_new <= f + cfg.armijo_c1 * alpha * slope:
            return alpha, x_new, f_new, g_new
        alpha *= cfg.backtrack_shrink
    raise LineSearchFailure(f"no sufficient decrease after {cfg.max_backtracks} trials")


def check_convergence(grad, s_set, tol: float) -> bool:
    return inf_norm(masked(grad, s_set)) <= tol


def minimize(
    fun: Oracle,
    bounds: BoxBounds,
    x0,
    cfg: Optional[SolverConfig] = None,
    callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
) -> SolverResult:
    """Minimize ``fun`` over the box ``bounds`` starting from feasible ``x0``.

    ``fun(x)`` must return ``(f(x), grad f(x))``. ``callback(k, x, f)`` is
    invoked after every accepted step.
    """
    cfg = cfg or SolverConfig()
    x = as_vector(x0, "x0").copy()
    if len(x) != len(bounds):
        raise DimensionError(f"x0 has length {len(x)}, bounds {len(bounds)}")
    if not bounds.contains(x):
        raise ValueError("x0 violates the bounds; clip it first")

    oracle = CountingOracle(fun, len(x))
    f, g = oracle(x)
    history = HistoryBuffer(cfg.memory_m)
    eps = cfg.eps_active

    status = Status.MAX_ITERS
    message = ""
    k = 0
    while True:
        free = compute_working_set(x, g, bounds, eps)
        if check_convergence(g, free, cfg.tol):
            status = Status.CONVERGED
            break
        if k >= cfg.max_iters:
            break

        d = two_loop_direction(g, history, free, eps)
        try:
            step = _line_step(oracle, x, f, g, d, bounds, cfg)
        except LineSearchFailure as exc:
            logger.debug("iteration %d: %s; retrying with steepest descent", k, exc)
            history.clear()
            try:
                step = _line_step(oracle, x, f, g, -masked(g, free), bounds, cfg)
            except LineSearchFailure as exc2:
                status = Status.LINE_SEARCH_FAILURE
                message = str(exc2)
                break

        _, x_new, f_new, g_new = step
        history.push(x_new - x, g_new - g)
        x, f, g = x_new, f_new, g_new
        k += 1
        if callback is not None:
            callback(k, x, f)

    free = compute_working_set(x, g, bounds, eps)
    return SolverResult(
        x=x,
        f=f,
        grad=g,
        grad_norm=inf_norm(masked(g, free)),
        iterations=k,
        status=status,
        evaluations=oracle.evaluations,
        message=message,
    )


def _line_step(oracle, x, f, g, d, bounds, cfg):
    p, branch = project_direction(x, g, d, bounds, cfg.eps_active)
    alpha_max = max_feasible_step(x, p, bounds, projected=branch is Branch.PROJECTED)
    return armijo_backtrack(oracle, x, f, g, p, alpha_max, cfg, bounds)
