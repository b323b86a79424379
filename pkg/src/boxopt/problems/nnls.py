from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..kernels import BoxBounds, as_matrix, as_vector


@dataclass(frozen=True)
class NnlsInstance:
    a: np.ndarray
    b: np.ndarray
    x_true: np.ndarray
    kind: str = ""
    scale_t: float = 0.0
    seed: int = 0


# (rows per unit t, cols per unit t, density, signal scale, distribution)
_KINDS = {
    "I": (2000, 6000, 0.01, math.sqrt(0.003), "uniform"),
    "II": (6000, 3000, 0.1, math.sqrt(1 / 6000), "gaussian"),
}
NOISE_SCALE = 0.003


def gen_nnls(kind: str, scale_t: float, seed: int) -> NnlsInstance:
    """Random NNLS instance of type ``"I"`` or ``"II"`` scaled by ``scale_t``.

    Type I: ``A`` is ``ceil(2000 t) x ceil(6000 t)`` uniform on [0, 1], the
    planted solution has density 0.01 and ``b = sqrt(0.003) A x + 0.003 z``.
    Type II: ``A`` is ``ceil(6000 t) x ceil(3000 t)`` standard Gaussian,
    density 0.1 and ``b = sqrt(1/6000) A x + 0.003 z``. Planted magnitudes are
    absolute values of standard normals.
    """
    kind = kind.upper()
    if kind not in _KINDS:
        raise ValueError(f"unknown NNLS kind {kind!r}; expected 'I' or 'II'")
    if not scale_t > 0:
        raise ValueError("scale_t must be positive")
    rows_per_t, cols_per_t, density, signal, dist = _KINDS[kind]
    m = math.ceil(rows_per_t * scale_t)
    n = math.ceil(cols_per_t * scale_t)

    rng = np.random.default_rng(seed)
    if dist == "uniform":
        a = rng.uniform(0.0, 1.0, size=(m, n))
    else:
        a = rng.standard_normal((m, n))
    nnz = max(1, round(density * n))
    support = rng.choice(n, size=nnz, replace=False)
    x_true = np.zeros(n)
    x_true[support] = np.abs(rng.standard_normal(nnz))
    b = signal * (a @ x_true) + NOISE_SCALE * rng.standard_normal(m)
    return NnlsInstance(a=a, b=b, x_true=x_true, kind=kind, scale_t=scale_t, seed=seed)


def build_nnls(instance):
    """Objective ``||A x - b||^2`` with gradient ``2 A^T (A x - b)`` on ``x >= 0``.

    Accepts an :class:`NnlsInstance` or an ``(A, b)`` pair.
    """
    if isinstance(instance, NnlsInstance):
        a, b = instance.a, instance.b
    else:
        a, b = instance
    a = as_matrix(a, "A")
    b = as_vector(b, "b")

    def objective(x):
        r = a @ x - b
        return float(np.dot(r, r)), 2.0 * (a.T @ r)

    return objective, BoxBounds.uniform(a.shape[1], lower=0.0)
