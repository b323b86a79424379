"""Augmented Lagrangian outer loop for equality, inequality and box constraints.

The problem ``min f(x) s.t. h(x) = 0, g(x) <= 0, l <= x <= u`` is reduced to
a sequence of box-constrained minimizations of

    L(x) = f(x) + rho/2 ||h(x) + lambda/rho||^2 + rho/2 ||(g(x) + mu/rho)_+||^2

solved with :func:`boxopt.solver.minimize`, followed by first-order
multiplier updates and a penalty increase whenever the constraint violation
fails to halve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .kernels import BoxBounds, DimensionError, as_vector, clip_to_box, inf_norm
from .solver import Oracle, SolverConfig, SolverResult, Status as InnerStatus, compute_working_set, minimize

logger = logging.getLogger(__name__)

# constraint(x) -> (values, vjp) where vjp(v) = J(x)^T v
Constraint = Callable[[np.ndarray], "tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]"]


@dataclass
class ConstrainedProblem:
    n: int
    objective: Oracle
    bounds: BoxBounds
    eq: Optional[Constraint] = None
    n_eq: int = 0
    ineq: Optional[Constraint] = None
    n_ineq: int = 0

    def __post_init__(self):
        if len(self.bounds) != self.n:
            raise DimensionError(f"bounds have length {len(self.bounds)}, expected {self.n}")
        if (self.eq is None) != (self.n_eq == 0):
            raise ValueError("eq callback and n_eq must be given together")
        if (self.ineq is None) != (self.n_ineq == 0):
            raise ValueError("ineq callback and n_ineq must be given together")

    def eval_eq(self, x):
        return _eval_block(self.eq, self.n_eq, x, "h")

    def eval_ineq(self, x):
        return _eval_block(self.ineq, self.n_ineq, x, "g")


def _eval_block(fn, size, x, name):
    if fn is None:
        return np.zeros(0), _zero_vjp(len(x))
    values, vjp = fn(x)
    values = as_vector(values, name)
    if len(values) != size:
        raise DimensionError(f"{name}(x) has length {len(values)}, expected {size}")
    return values, vjp


def _zero_vjp(n):
    return lambda v: np.zeros(n)


@dataclass
class Multipliers:
    lam: np.ndarray
    mu: np.ndarray
    rho: float = 1.0

    def __post_init__(self):
        self.lam = as_vector(self.lam, "lambda")
        self.mu = as_vector(self.mu, "mu")
        if np.any(self.mu < 0):
            raise ValueError("inequality multipliers must be non-negative")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @classmethod
    def zeros(cls, n_eq: int, n_ineq: int, rho: float = 1.0) -> Multipliers:
        return cls(np.zeros(n_eq), np.zeros(n_ineq), rho)


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_OUTER = "MaxOuter"
    MAX_ITERS = "MaxIters"  # only without constraints, where the single inner solve ran out
    INNER_FAILURE = "InnerFailure"


@dataclass(frozen=True)
class AuglagConfig:
    inner: SolverConfig = field(default_factory=SolverConfig)
    feas_tol: float = 1e-6
    max_outer: int = 100
    rho0: float = 1.0
    rho_factor: float = 2.0
    rho_cap: float = 1e12

    def __post_init__(self):
        if not self.feas_tol > 0:
            raise ValueError("feas_tol must be positive")
        if not self.rho_factor > 1:
            raise ValueError("rho_factor must exceed 1")
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if self.rho_cap < self.rho0:
            raise ValueError("rho_cap must be at least rho0")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


@dataclass
class AuglagResult:
    x: np.ndarray
    multipliers: Multipliers
    f: float
    violation: float
    stationarity: float
    outer_iters: int
    inner_iters: int
    status: Status
    inner_results: list[SolverResult] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def auglag_value_grad(problem: ConstrainedProblem, x, mult: Multipliers) -> tuple[float, np.ndarray]:
    """Value and gradient of the augmented Lagrangian at ``x``."""
    f, grad = problem.objective(x)
    value = float(f)
    grad = as_vector(grad, "gradient")
    rho = mult.rho
    if problem.n_eq:
        h, h_vjp = problem.eval_eq(x)
        shifted = h + mult.lam / rho
        value += 0.5 * rho * float(np.dot(shifted, shifted))
        grad = grad + rho * as_vector(h_vjp(shifted))
    if problem.n_ineq:
        g, g_vjp = problem.eval_ineq(x)
        # one plus-part shared by value and gradient keeps them consistent at the kink
        plus = np.maximum(g + mult.mu / rho, 0.0)
        value += 0.5 * rho * float(np.dot(plus, plus))
        grad = grad + rho * as_vector(g_vjp(plus))
    return value, grad


def update_multipliers(mult: Multipliers, h_val, g_val) -> Multipliers:
    h_val = as_vector(h_val, "h")
    g_val = as_vector(g_val, "g")
    if len(h_val) != len(mult.lam) or len(g_val) != len(mult.mu):
        raise DimensionError(
            f"h={len(h_val)} vs lambda={len(mult.lam)}, g={len(g_val)} vs mu={len(mult.mu)}"
        )
    lam = mult.lam + mult.rho * h_val
    mu = np.maximum(mult.mu + mult.rho * g_val, 0.0)
    return Multipliers(lam, mu, mult.rho)


def constraint_violation(h_val, g_val) -> float:
    h_val = np.asarray(h_val, dtype=np.float64)
    g_val = np.asarray(g_val, dtype=np.float64)
    return max(inf_norm(h_val), inf_norm(np.maximum(g_val, 0.0)))


def update_rho(rho: float, v_prev: float, v_now: float, cfg: AuglagConfig) -> float:
    """Multiply ``rho`` by ``cfg.rho_factor`` unless the violation halved."""
    if v_now > 0.5 * v_prev:
        rho = rho * cfg.rho_factor
    return min(rho, cfg.rho_cap)


def kkt_residuals(
    problem: ConstrainedProblem, x, mult: Multipliers, eps_active: float = 1e-9
) -> tuple[float, float, float]:
    """Stationarity, feasibility and complementarity residuals (infinity norms).

    Stationarity skips bound-active coordinates, which carry an implicit
    bound multiplier. A coordinate is bound-active when it lies within
    ``eps_active`` of a bound and the Lagrangian gradient pushes it outward,
    the same rule the box solver uses for its working set. A coordinate on a
    bound whose gradient points inward still counts.
    """
    x = as_vector(x)
    _, grad = problem.objective(x)
    grad = as_vector(grad, "gradient").copy()
    h, h_vjp = problem.eval_eq(x)
    g, g_vjp = problem.eval_ineq(x)
    if problem.n_eq:
        grad += as_vector(h_vjp(mult.lam))
    if problem.n_ineq:
        grad += as_vector(g_vjp(mult.mu))
    free = compute_working_set(x, grad, problem.bounds, eps_active)
    stationarity = inf_norm(grad[free])
    violation = constraint_violation(h, g)
    complementarity = inf_norm(mult.mu * g) if problem.n_ineq else 0.0
    return stationarity, violation, complementarity


def solve(
    problem: ConstrainedProblem,
    cfg: Optional[AuglagConfig] = None,
    x0=None,
    callback: Optional[Callable[[int, np.ndarray, Multipliers, float], None]] = None,
    inner_callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
) -> AuglagResult:
    """Run the augmented Lagrangian method.

    Starts from ``clip(0)`` (or ``clip(x0)``) with zero multipliers and
    ``rho = cfg.rho0``. Each round solves the box-constrained subproblem from
    the previous iterate with an empty curvature history, updates the
    multipliers and the penalty, and stops once the subproblem converged to
    ``cfg.inner.tol`` and the violation is below ``cfg.feas_tol``.

    ``callback(k, x, multipliers, violation)`` runs after each round;
    ``inner_callback`` is forwarded to every inner solve.
    """
    cfg = cfg or AuglagConfig()
    start = np.zeros(problem.n) if x0 is None else as_vector(x0, "x0")
    x = clip_to_box(start, problem.bounds)
    mult = Multipliers.zeros(problem.n_eq, problem.n_ineq, cfg.rho0)
    unconstrained = problem.n_eq == 0 and problem.n_ineq == 0

    h, _ = problem.eval_eq(x)
    g, _ = problem.eval_ineq(x)
    violation = constraint_violation(h, g)

    inner_results: list[SolverResult] = []
    status = Status.MAX_OUTER
    inner_tol = cfg.inner.tol
    k = 0
    while k < cfg.max_outer:
        current = mult
        inner_tol = max(cfg.inner.tol, 0.1 * violation)
        inner_cfg = replace(cfg.inner, tol=inner_tol)
        res = minimize(
            lambda z: auglag_value_grad(problem, z, current),
            problem.bounds,
            x,
            inner_cfg,
            callback=inner_callback,
        )
        inner_results.append(res)
        k += 1
        x = res.x
        if res.status is InnerStatus.LINE_SEARCH_FAILURE:
            # a stall after some progress usually means the subproblem hit
            # rounding noise; the multiplier step is still worth taking
            logger.info("inner solve stalled in round %d after %d its: %s", k, res.iterations, res.message)
            if res.iterations == 0:
                logger.warning("inner solve failed in round %d: %s", k, res.message)
                status = Status.INNER_FAILURE
                break

        h, _ = problem.eval_eq(x)
        g, _ = problem.eval_ineq(x)
        v_now = constraint_violation(h, g)
        inner_ok = res.grad_norm <= cfg.inner.tol
        if not unconstrained:
            mult = update_multipliers(mult, h, g)
            mult = Multipliers(mult.lam, mult.mu, update_rho(mult.rho, violation, v_now, cfg))
        violation = v_now
        logger.debug(
            "round %d: inner %s in %d its, violation %.3e, rho %.3g",
            k, res.status.value, res.iterations, violation, mult.rho,
        )
        if callback is not None:
            callback(k, x, mult, violation)
        if inner_ok and violation <= cfg.feas_tol:
            status = Status.CONVERGED
            break
        if unconstrained:
            status = Status.MAX_ITERS if res.status is InnerStatus.MAX_ITERS else Status.INNER_FAILURE
            break

    f, _ = problem.objective(x)
    stationarity, violation, _ = kkt_residuals(problem, x, mult, cfg.inner.eps_active)
    return AuglagResult(
        x=x,
        multipliers=mult,
        f=float(f),
        violation=violation,
        stationarity=stationarity,
        outer_iters=k,
        inner_iters=sum(r.iterations for r in inner_results),
        status=status,
        inner_results=inner_results,
    )
