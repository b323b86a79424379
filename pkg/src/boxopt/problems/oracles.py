"""Slow but independent reference solvers used to check the main solver."""

from __future__ import annotations

from typing import Union

import numpy as np
from scipy.special import logsumexp

from ..kernels import BoxBounds, as_matrix, as_vector, clip_to_box, inf_norm


class ConvergenceError(RuntimeError):
    pass


def sinkhorn(u, v, cost, lam: float, tol: float = 1e-9, max_iters: int = 100_000) -> np.ndarray:
    """Entropic transport plan via log-domain Sinkhorn scaling.

    Solves ``min <M, P> + lam * sum P log P`` subject to the marginals ``u``
    and ``v``. Iterates until both marginal errors are at most ``tol`` in the
    infinity norm.
    """
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    cost = as_matrix(cost, "cost")
    if cost.shape != (len(u), len(v)):
        raise ValueError(f"cost is {cost.shape}, marginals have lengths {len(u)}, {len(v)}")
    if not lam > 0:
        raise ValueError("lam must be positive")

    log_k = -cost / lam
    with np.errstate(divide="ignore"):
        log_u = np.log(u)
        log_v = np.log(v)
    # scaled dual potentials: log P = log_k + a[:, None] + b[None, :]
    a = np.zeros(len(u))
    b = np.zeros(len(v))
    for _ in range(max_iters):
        a = log_u - logsumexp(log_k + b[None, :], axis=1)
        b = log_v - logsumexp(log_k + a[:, None], axis=0)
        p = np.exp(log_k + a[:, None] + b[None, :])
        if inf_norm(p.sum(axis=1) - u) <= tol and inf_norm(p.sum(axis=0) - v) <= tol:
            return p
    raise ConvergenceError(f"Sinkhorn did not reach tol={tol} in {max_iters} iterations")


def projected_gradient(
    oracle,
    bounds: BoxBounds,
    x0,
    steps: int = 1_000_000,
    step_rule: Union[str, float] = "backtracking",
    gtol: float = 0.0,
    c1: float = 1e-4,
) -> np.ndarray:
    """Projected gradient descent ``x <- clip(x - alpha grad f(x))``.

    ``steps`` is the budget of objective evaluations. With
    ``step_rule="backtracking"`` each iteration doubles the previous step and
    halves it until the projected point satisfies the Armijo condition; a
    float gives a constant step. Stops early when the iterate stops moving
    or the projected-gradient residual ``||x - clip(x - grad)||_inf`` is at
    most ``gtol``.
    """
    x = clip_to_box(x0, bounds)
    f, g = oracle(x)
    evals = 1
    backtracking = step_rule == "backtracking"
    if not backtracking:
        alpha = float(step_rule)
        if not alpha > 0:
            raise ValueError("step must be positive")
    else:
        alpha = 1.0

    while evals < steps:
        if inf_norm(x - clip_to_box(x - g, bounds)) <= gtol:
            break
        if backtracking:
            alpha *= 2.0
            while True:
                x_new = clip_to_box(x - alpha * g, bounds)
                f_new, g_new = oracle(x_new)
                evals += 1
                if f_new <= f + c1 * float(np.dot(g, x_new - x)) or evals >= steps:
                    break
                alpha *= 0.5
        else:
            x_new = clip_to_box(x - alpha * g, bounds)
            f_new, g_new = oracle(x_new)
            evals += 1
        if np.array_equal(x_new, x):
            break
        x, f, g = x_new, f_new, g_new
    return x


def _project_hyperplane_box(z: np.ndarray, y: np.ndarray, c: float) -> np.ndarray:
    """Exact Euclidean projection onto ``{a : y^T a = 0, 0 <= a <= c}`` for ``y`` in {-1, +1}^n.

    The projection is ``clip(z - t y, 0, c)`` where ``t`` zeroes the
    monotone piecewise-linear function ``phi(t) = y^T clip(z - t y, 0, c)``;
    its root is found exactly between consecutive breakpoints.
    """
    breaks = np.unique(np.concatenate([z * y, (z - c) * y]))
    vals = np.sum(y[None, :] * np.clip(z[None, :] - breaks[:, None] * y[None, :], 0.0, c), axis=1)
    # vals is non-increasing in t
    if vals[0] < 0 or vals[-1] > 0:
        raise ValueError("projection set is empty")
    hit = np.flatnonzero(vals == 0.0)
    if hit.size:
        t = breaks[hit[0]]
    else:
        j = int(np.searchsorted(-vals, 0.0))
        t0, t1 = breaks[j - 1], breaks[j]
        v0, v1 = vals[j - 1], vals[j]
        t = t0 + (t1 - t0) * v0 / (v0 - v1)
    return np.clip(z - t * y, 0.0, c)


def svm_dual_oracle(kernel, labels, c: float, max_iters: int = 200_000, tol: float = 1e-11) -> np.ndarray:
    """Kernel SVM dual via accelerated projected gradient with exact projection.

    The equality constraint's multiplier is handled inside the projection,
    so every iterate is feasible. Uses step ``1/L`` with ``L`` the largest
    kernel eigenvalue and restarts momentum whenever the objective rises.
    """
    k = as_matrix(kernel, "kernel")
    y = as_vector(labels, "labels")
    n = len(y)
    lip = float(np.linalg.eigvalsh(k)[-1])
    step = 1.0 / lip

    def value_grad(a):
        ay = a * y
        kay = k @ ay
        return 0.5 * float(ay @ kay) - float(a.sum()), y * kay - 1.0

    a = _project_hyperplane_box(np.zeros(n), y, c)
    z = a.copy()
    t = 1.0
    f_prev = value_grad(a)[0]
    for _ in range(max_iters):
        _, gz = value_grad(z)
        a_new = _project_hyperplane_box(z - step * gz, y, c)
        f_new = value_grad(a_new)[0]
        if f_new > f_prev:
            if t == 1.0:
                break  # a plain projected step no longer decreases f
            z, t = a.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = a_new + ((t - 1.0) / t_new) * (a_new - a)
        moved = inf_norm(a_new - a)
        a, t, f_prev = a_new, t_new, f_new
        if moved <= tol:
            break
    return a
