"""Joint distribution with prescribed marginals.

    min <M, P> + lam * r(P)  s.t.  P 1 = u,  P^T 1 = v,  P >= 0

with ``r(P) = sum P log P`` (entropy) or ``r(P) = 1/2 ||P||^2`` (Gaussian).
The optimization variable is ``vec(P)`` in column-major order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..auglag import ConstrainedProblem
from ..kernels import BoxBounds, as_matrix, as_vector

LOG_FLOOR = -745.0
DEFAULT_LAMBDA = 0.5

# marginal shapes for data set 1: N(0.5, 0.12) and an equal mixture of N(0.3, 0.08), N(0.75, 0.08)
GAUSS_MEAN, GAUSS_STD = 0.5, 0.12
MIXTURE = ((0.3, 0.08), (0.75, 0.08))


class Regularizer(str, Enum):
    ENTROPY = "entropy"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class JointProbInstance:
    u: np.ndarray
    v: np.ndarray
    cost: np.ndarray
    lam: float = DEFAULT_LAMBDA
    regularizer: Regularizer = Regularizer.ENTROPY

    def __post_init__(self):
        u = as_vector(self.u, "u")
        v = as_vector(self.v, "v")
        cost = as_matrix(self.cost, "cost")
        if cost.shape != (len(u), len(v)):
            raise ValueError(f"cost is {cost.shape}, marginals have lengths {len(u)}, {len(v)}")
        for name, w in (("u", u), ("v", v)):
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must be non-negative and sum to 1")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "regularizer", Regularizer(self.regularizer))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape


def _normal_pdf(t, mean, std):
    return np.exp(-0.5 * ((t - mean) / std) ** 2) / (std * np.sqrt(2 * np.pi))


def _bin_centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def gaussian_mixture_marginals(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Discretized Gaussian ``u`` and two-component mixture ``v`` on ``n`` bins of [0, 1]."""
    if n < 2:
        raise ValueError("need at least two bins")
    t = _bin_centers(n)
    u = _normal_pdf(t, GAUSS_MEAN, GAUSS_STD)
    v = sum(0.5 * _normal_pdf(t, mean, std) for mean, std in MIXTURE)
    u = u / u.sum()
    v = v / v.sum()
    return u, v


def _gaussian_outer_cost(n: int) -> np.ndarray:
    phi = _normal_pdf(_bin_centers(n), GAUSS_MEAN, GAUSS_STD)
    cost = np.outer(phi, phi)
    return cost / cost.max()


def gen_joint_prob(
    n: int,
    dataset: int = 1,
    seed: int = 0,
    regularizer: Regularizer | str = Regularizer.ENTROPY,
    lam: float = DEFAULT_LAMBDA,
) -> JointProbInstance:
    """Instance from data set 1 (Gaussian marginals, ``m = n``) or 2 (uniform random, ``m = 2n``).

    Data set 1 is deterministic; ``seed`` only affects data set 2.
    """
    if dataset == 1:
        u, v = gaussian_mixture_marginals(n)
        cost = _gaussian_outer_cost(n)
    elif dataset == 2:
        rng = np.random.default_rng(seed)
        m = 2 * n
        u = rng.uniform(size=m)
        v = rng.uniform(size=n)
        u /= u.sum()
        v /= v.sum()
        cost = rng.uniform(size=(m, n))
    else:
        raise ValueError(f"unknown data set {dataset}")
    return JointProbInstance(u=u, v=v, cost=cost, lam=lam, regularizer=Regularizer(regularizer))


def entropy(p: np.ndarray) -> float:
    """``sum p log p`` with ``0 log 0 = 0``."""
    pos = p > 0
    return float(np.sum(p[pos] * np.log(p[pos])))


def joint_prob_objective(p, cost, lam: float, regularizer: Regularizer | str) -> float:
    p = as_matrix(p, "P")
    linear = float(np.sum(cost * p))
    if Regularizer(regularizer) is Regularizer.ENTROPY:
        return linear + lam * entropy(p)
    return linear + 0.5 * lam * float(np.sum(p * p))


def build_joint_prob(instance: JointProbInstance, log_floor: float = LOG_FLOOR) -> ConstrainedProblem:
    m, n = instance.shape
    cost = instance.cost
    cost_vec = cost.reshape(-1, order="F")
    lam = instance.lam
    u, v = instance.u, instance.v
    entropic = instance.regularizer is Regularizer.ENTROPY

    def objective(x):
        if entropic:
            if np.any(x < 0):
                raise ValueError("entropy is undefined for negative entries")
            pos = x > 0
            logs = np.full_like(x, -np.inf)
            logs[pos] = np.log(x[pos])
            value = float(np.dot(cost_vec, x)) + lam * float(np.sum(x[pos] * logs[pos]))
            grad = cost_vec + lam * np.maximum(logs + 1.0, log_floor)
        else:
            value = float(np.dot(cost_vec, x)) + 0.5 * lam * float(np.dot(x, x))
            grad = cost_vec + lam * x
        return value, grad

    def marginals(x):
        p = x.reshape(m, n, order="F")
        h = np.concatenate([p.sum(axis=1) - u, p.sum(axis=0) - v])

        def vjp(w):
            return (w[:m, None] + w[None, m:]).reshape(-1, order="F")

        return h, vjp

    return ConstrainedProblem(
        n=m * n,
        objective=objective,
        bounds=BoxBounds.uniform(m * n, lower=0.0),
        eq=marginals,
        n_eq=m + n,
    )
