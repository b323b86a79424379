"""Logistic regression with an equal-group-loss fairness constraint.

    min_w  mean_D logloss(y_i <w, x_i>) + lam ||w||^2
    s.t.   L_A(w) = L_B(w)

where the group losses use either the logistic loss (non-convex constraint)
or the linear loss ``-y_i <w, x_i>`` (affine constraint).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from ..auglag import ConstrainedProblem
from ..kernels import BoxBounds, as_matrix, as_vector

DEFAULT_LAMBDA = 1e-3


class ConstraintLoss(str, Enum):
    LOGISTIC = "logistic"
    LINEAR = "linear"


@dataclass(frozen=True)
class FairnessInstance:
    features: np.ndarray
    labels: np.ndarray
    group_a: np.ndarray  # boolean row masks
    group_b: np.ndarray
    lambda_reg: float = DEFAULT_LAMBDA
    constraint_loss: ConstraintLoss = ConstraintLoss.LOGISTIC

    def __post_init__(self):
        x = as_matrix(self.features, "features")
        y = as_vector(self.labels, "labels")
        a = np.asarray(self.group_a, dtype=bool)
        b = np.asarray(self.group_b, dtype=bool)
        if not (len(y) == len(a) == len(b) == x.shape[0]):
            raise ValueError("features, labels and group masks must have the same number of rows")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be exactly +1 or -1")
        if np.any(a & b):
            raise ValueError("groups must be disjoint")
        if not a.any() or not b.any():
            raise ValueError("both groups must be non-empty")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "group_a", a)
        object.__setattr__(self, "group_b", b)
        object.__setattr__(self, "constraint_loss", ConstraintLoss(self.constraint_loss))


def logistic_loss(t: np.ndarray) -> np.ndarray:
    """``log(1 + exp(-t))`` evaluated without overflow."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = np.log1p(np.exp(-t[pos]))
    neg = ~pos
    out[neg] = np.log1p(np.exp(t[neg])) - t[neg]
    return out


def _logistic_mean_and_grad(x, y, w):
    margins = y * (x @ w)
    value = float(np.mean(logistic_loss(margins)))
    # d/dt log(1 + e^-t) = -sigmoid(-t)
    coef = -y * expit(-margins) / len(y)
    return value, x.T @ coef


def _linear_mean_and_grad(x, y, w):
    value = float(-np.mean(y * (x @ w)))
    return value, -(x.T @ y) / len(y)


def build_fair_logreg(instance: FairnessInstance) -> ConstrainedProblem:
    x, y = instance.features, instance.labels
    xa, ya = x[instance.group_a], y[instance.group_a]
    xb, yb = x[instance.group_b], y[instance.group_b]
    lam = instance.lambda_reg
    group_loss = (
        _logistic_mean_and_grad
        if instance.constraint_loss is ConstraintLoss.LOGISTIC
        else _linear_mean_and_grad
    )
    d = x.shape[1]

    def objective(w):
        value, grad = _logistic_mean_and_grad(x, y, w)
        return value + lam * float(np.dot(w, w)), grad + 2.0 * lam * w

    def equality(w):
        la, ga = group_loss(xa, ya, w)
        lb, gb = group_loss(xb, yb, w)
        diff = ga - gb
        return np.array([la - lb]), lambda v: diff * v[0]

    return ConstrainedProblem(
        n=d,
        objective=objective,
        bounds=BoxBounds.unbounded(d),
        eq=equality,
        n_eq=1,
    )


def gen_fairness(
    m: int,
    d: int = 20,
    seed: int = 0,
    constraint_loss: ConstraintLoss | str = ConstraintLoss.LOGISTIC,
    lambda_reg: float = DEFAULT_LAMBDA,
    bias: float = 1.0,
) -> FairnessInstance:
    """Synthetic data with a planted group bias.

    Rows are split at random into two groups; group A's features are shifted
    along the first coordinate by ``bias`` and labels follow a logistic model
    on the shifted features, so an unconstrained classifier treats the
    groups differently.
    """
    if m < 4:
        raise ValueError("need at least four samples")
    rng = np.random.default_rng(seed)
    in_a = rng.uniform(size=m) < 0.5
    in_a[0], in_a[1] = True, False
    x = rng.standard_normal((m, d))
    x[:, -1] = 1.0  # intercept column
    x[in_a, 0] += bias
    w_true = rng.standard_normal(d) / np.sqrt(d)
    w_true[0] = abs(w_true[0]) + 1.0
    prob = expit(x @ w_true)
    y = np.where(rng.uniform(size=m) < prob, 1.0, -1.0)
    return FairnessInstance(
        features=x,
        labels=y,
        group_a=in_a,
        group_b=~in_a,
        lambda_reg=lambda_reg,
        constraint_loss=ConstraintLoss(constraint_loss),
    )


def load_fairness_csv(
    path,
    label_col: int,
    group_col: int,
    feature_cols: Optional[Sequence[int]] = None,
    skip_header: bool = False,
    constraint_loss: ConstraintLoss | str = ConstraintLoss.LOGISTIC,
    lambda_reg: float = DEFAULT_LAMBDA,
) -> FairnessInstance:
    """Read numeric features, a +-1 label column and a 0/1 group column from CSV.

    Group 1 becomes group A and group 0 group B. Without ``feature_cols`` all
    remaining columns are features.
    """
    data = np.loadtxt(Path(path), delimiter=",", ndmin=2, skiprows=1 if skip_header else 0)
    ncols = data.shape[1]
    if feature_cols is None:
        feature_cols = [j for j in range(ncols) if j not in (label_col, group_col)]
    groups = data[:, group_col]
    if not np.all(np.isin(groups, (0.0, 1.0))):
        raise ValueError("group column must contain only 0 and 1")
    return FairnessInstance(
        features=data[:, list(feature_cols)],
        labels=data[:, label_col],
        group_a=groups == 1.0,
        group_b=groups == 0.0,
        lambda_reg=lambda_reg,
        constraint_loss=ConstraintLoss(constraint_loss),
    )
