from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..auglag import ConstrainedProblem
from ..kernels import BoxBounds, as_matrix, as_vector

# experiment configuration for the kernel SVM dual
DEFAULT_GAMMA = 1.0
DEFAULT_C = 1.0


@dataclass(frozen=True)
class SvmInstance:
    kernel: np.ndarray
    labels: np.ndarray
    c: float
    points: np.ndarray | None = None
    gamma: float | None = None


def rbf_kernel(points, gamma: float) -> np.ndarray:
    """Gaussian kernel ``K_ij = exp(-gamma ||p_i - p_j||^2)``."""
    p = as_matrix(points, "points")
    sq = np.sum(p * p, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (p @ p.T), 0.0)
    np.fill_diagonal(d2, 0.0)
    k = np.exp(-gamma * d2)
    return 0.5 * (k + k.T)


def gen_svm_blobs(n: int, seed: int, dim: int = 2, separation: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
    """Two overlapping Gaussian blobs with labels +1 and -1 (first half +1)."""
    if n < 2:
        raise ValueError("need at least two points")
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    labels = np.concatenate([np.ones(n_pos), -np.ones(n - n_pos)])
    centers = np.zeros((n, dim))
    centers[:n_pos, 0] = separation / 2
    centers[n_pos:, 0] = -separation / 2
    points = centers + rng.standard_normal((n, dim))
    return points, labels


def build_dual_svm(points, labels, gamma: float = DEFAULT_GAMMA, c: float = DEFAULT_C, kernel=None):
    """Kernel SVM dual ``min 1/2 (a*y)^T K (a*y) - sum(a)`` s.t. ``y^T a = 0``, ``0 <= a <= c``.

    The l1 norm of ``a`` equals ``sum(a)`` on the feasible box, which keeps
    the objective smooth. A precomputed ``kernel`` overrides ``points``.
    Returns ``(problem, instance)``.
    """
    y = as_vector(labels, "labels")
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be exactly +1 or -1")
    if not gamma > 0 or not c > 0:
        raise ValueError("gamma and c must be positive")
    if np.all(y == y[0]):
        warnings.warn("all labels have the same sign; the dual optimum is a = 0", stacklevel=2)
    k = as_matrix(kernel, "kernel") if kernel is not None else rbf_kernel(points, gamma)
    n = len(y)
    if k.shape != (n, n):
        raise ValueError(f"kernel shape {k.shape} does not match {n} labels")

    def objective(a):
        ay = a * y
        kay = k @ ay
        return 0.5 * float(np.dot(ay, kay)) - float(np.sum(a)), y * kay - 1.0

    def equality(a):
        return np.array([float(np.dot(y, a))]), lambda v: y * v[0]

    problem = ConstrainedProblem(
        n=n,
        objective=objective,
        bounds=BoxBounds.uniform(n, 0.0, c),
        eq=equality,
        n_eq=1,
    )
    pts = None if points is None else as_matrix(points, "points")
    return problem, SvmInstance(kernel=k, labels=y, c=c, points=pts, gamma=gamma)
