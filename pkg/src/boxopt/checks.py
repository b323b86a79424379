"""Verification suites that compare the solver pieces with independent oracles.

Each suite returns a list of :class:`CaseResult`; the command-line ``check``
subcommand prints them and the test suite asserts on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .auglag import AuglagConfig, ConstrainedProblem, Multipliers, auglag_value_grad, solve
from .kernels import BoxBounds
from .modeling import compile_model, parse
from .problems import (
    build_dual_svm,
    build_fair_logreg,
    build_joint_prob,
    build_nnls,
    gen_fairness,
    gen_joint_prob,
    gen_nnls,
    gen_svm_blobs,
    joint_prob_objective,
    sinkhorn,
)
from .problems.jointprob import JointProbInstance
from .solver import HistoryBuffer, compute_working_set, two_loop_direction


@dataclass(frozen=True)
class CaseResult:
    name: str
    passed: bool
    observed: float
    expected: float  # the bound the observed value was held to

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name} observed={self.observed:.3e} limit={self.expected:.3e}"


# working set


def scalar_working_set(x, grad, lower, upper, eps) -> np.ndarray:
    """Free-variable mask computed one coordinate at a time."""
    free = np.ones(len(x), dtype=bool)
    for i in range(len(x)):
        if x[i] <= lower[i] + eps and grad[i] >= 0:
            free[i] = False
        elif x[i] >= upper[i] - eps and grad[i] <= 0:
            free[i] = False
    return free


def _random_box_point(rng, n):
    lower = rng.uniform(-2, 0, n)
    upper = lower + rng.uniform(0.1, 2, n)
    lower[rng.uniform(size=n) < 0.15] = -np.inf
    upper[rng.uniform(size=n) < 0.15] = np.inf
    x = np.where(np.isfinite(lower), lower, -3.0) + rng.uniform(0, 1, n)
    # pin some coordinates on or near a bound
    r = rng.uniform(size=n)
    x = np.where((r < 0.25) & np.isfinite(lower), lower + rng.choice([0.0, 1e-12, 1e-3], n), x)
    x = np.where((r > 0.75) & np.isfinite(upper), upper - rng.choice([0.0, 1e-12, 1e-3], n), x)
    x = np.clip(x, lower, upper)
    grad = rng.standard_normal(n)
    grad[rng.uniform(size=n) < 0.1] = 0.0
    return x, grad, lower, upper


def working_set_suite(seed: int = 0, cases: int = 200, n: int = 32) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(cases):
        x, grad, lower, upper = _random_box_point(rng, n)
        eps = float(rng.choice([0.0, 1e-9, 1e-6]))
        fast = compute_working_set(x, grad, BoxBounds(lower, upper), eps)
        slow = scalar_working_set(x, grad, lower, upper, eps)
        mismatches = int(np.sum(fast != slow))
        out.append(CaseResult(f"working-set/{k}", mismatches == 0, mismatches, 0))
    return out


# two-loop recursion


def dense_inverse_bfgs(pairs, mask, eps) -> np.ndarray:
    """Inverse Hessian approximation built as an explicit matrix.

    Pairs are masked to the free set and screened with the same curvature
    test; accepted pairs are applied oldest first through the BFGS inverse
    update starting from ``gamma * I`` restricted to the free set, where
    ``gamma`` comes from the newest accepted pair.
    """
    n = len(mask)
    proj = np.diag(mask.astype(float))
    accepted = []
    for s, y in pairs:
        s, y = proj @ s, proj @ y
        if s @ y > eps * (y @ y):
            accepted.append((s, y))
    if not accepted:
        return proj
    s_new, y_new = accepted[-1]
    h = (s_new @ y_new) / (y_new @ y_new) * proj
    eye = np.eye(n)
    for s, y in accepted:
        rho = 1.0 / (s @ y)
        left = eye - rho * np.outer(s, y)
        h = left @ h @ left.T + rho * np.outer(s, s)
    return h


def two_loop_suite(seed: int = 0, cases: int = 100, tol: float = 1e-9) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(cases):
        n = int(rng.integers(2, 9))
        npairs = int(rng.integers(0, 5))
        mask = rng.uniform(size=n) < 0.75
        if not mask.any():
            mask[0] = True
        hist = HistoryBuffer(4)
        pairs = []
        for _ in range(npairs):
            s = rng.standard_normal(n)
            # mostly positive curvature, sometimes not
            y = s * rng.uniform(0.2, 3.0, n) + 0.1 * rng.standard_normal(n)
            if rng.uniform() < 0.2:
                y = -y
            hist.push(s, y)
            pairs.append((s, y))
        grad = rng.standard_normal(n)
        eps = 1e-9
        d = two_loop_direction(grad, hist, mask, eps)
        ref = -dense_inverse_bfgs(pairs, mask, eps) @ grad
        err = float(np.max(np.abs(d - ref)) / max(1.0, np.max(np.abs(ref))))
        out.append(CaseResult(f"two-loop/{k}", err <= tol, err, tol))
    return out


# gradients


def central_difference(fun: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def gradient_error(fun, x, h: float = 1e-6) -> float:
    """Infinity-norm gap between an analytic and a central-difference gradient, relative to max(1, |g|)."""
    _, g = fun(x)
    fd = central_difference(lambda z: fun(z)[0], x, h)
    return float(np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g))))


def vjp_error(con, x, v, h: float = 1e-6) -> float:
    vals, vjp = con(x)
    analytic = vjp(v)
    fd = central_difference(lambda z: float(np.dot(con(z)[0], v)), x, h)
    return float(np.max(np.abs(analytic - fd)) / max(1.0, np.max(np.abs(analytic))))


def _points(rng, bounds: BoxBounds, count: int, margin: float = 0.05) -> list[np.ndarray]:
    lo = np.where(np.isfinite(bounds.lower), bounds.lower + margin, -1.0)
    hi = np.where(np.isfinite(bounds.upper), bounds.upper - margin, lo + 2.0)
    hi = np.maximum(hi, lo + margin)
    return [rng.uniform(lo, hi) for _ in range(count)]


def _gradient_problems(seed: int) -> dict[str, ConstrainedProblem]:
    probs: dict[str, ConstrainedProblem] = {}
    nnls_obj, nnls_box = build_nnls(gen_nnls("I", 0.005, seed))
    probs["nnls-i"] = ConstrainedProblem(n=len(nnls_box), objective=nnls_obj, bounds=nnls_box)
    nnls_obj, nnls_box = build_nnls(gen_nnls("II", 0.005, seed))
    probs["nnls-ii"] = ConstrainedProblem(n=len(nnls_box), objective=nnls_obj, bounds=nnls_box)
    pts, labels = gen_svm_blobs(12, seed)
    probs["dual-svm"], _ = build_dual_svm(pts, labels)
    for reg in ("entropy", "gaussian"):
        probs[f"joint-{reg}"] = build_joint_prob(gen_joint_prob(4, 2, seed, reg))
    for loss in ("logistic", "linear"):
        probs[f"fair-{loss}"] = build_fair_logreg(gen_fairness(60, 5, seed, loss))
    return probs


_RANDOM_MODEL = """
parameters
  Matrix A
  Vector b
  Vector c
  Matrix M
variables
  Vector x
  Matrix P
  Scalar t
min
  norm2(A*x - b) + sum(exp(x / 4)) + sum(log1p(exp(-(A*x)))) + t*t
    + sum(M .* P) + sum(P .* log(P)) + 0.5 * c' * (P*1) - sum(log(x + 3)) + norm2(P')
st
  P*1 == c
  A*x - b <= 1
  sum(x .* x) - t == 0
"""


def gradient_suite(seed: int = 0, points: int = 20, tol: float = 1e-6) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    out = []
    for name, prob in _gradient_problems(seed).items():
        worst = 0.0
        for x in _points(rng, prob.bounds, points):
            worst = max(worst, gradient_error(prob.objective, x))
            if prob.n_eq:
                worst = max(worst, vjp_error(prob.eq, x, rng.standard_normal(prob.n_eq)))
        out.append(CaseResult(f"gradients/{name}", worst <= tol, worst, tol))

    # augmented Lagrangian on a problem with both constraint kinds
    model = parse(_RANDOM_MODEL)
    binds = {"A": rng.standard_normal((3, 4)), "b": rng.standard_normal(3), "c": rng.uniform(0.5, 1.0, 2), "M": rng.uniform(size=(2, 3))}
    compiled, prob = compile_model(model, binds)
    worst_model, worst_al = 0.0, 0.0
    lo = np.full(prob.n, -0.9)
    for x in _points(rng, BoxBounds(lo, np.full(prob.n, 0.9)), points, margin=0.0):
        # P must stay positive for log
        x[compiled.slots["P"].offset:compiled.slots["P"].stop] = rng.uniform(0.1, 1.0, compiled.slots["P"].size)
        worst_model = max(worst_model, gradient_error(prob.objective, x))
        worst_model = max(worst_model, vjp_error(prob.eq, x, rng.standard_normal(prob.n_eq)))
        worst_model = max(worst_model, vjp_error(prob.ineq, x, rng.standard_normal(prob.n_ineq)))
        mult = Multipliers(rng.standard_normal(prob.n_eq), rng.uniform(0, 2, prob.n_ineq), float(rng.uniform(0.5, 5)))
        worst_al = max(worst_al, gradient_error(lambda z: auglag_value_grad(prob, z, mult), x))
    out.append(CaseResult("gradients/model", worst_model <= tol, worst_model, tol))
    out.append(CaseResult("gradients/auglag", worst_al <= tol, worst_al, tol))
    return out


# Sinkhorn cross-check


def sinkhorn_suite(seed: int = 0, sizes=(10, 20), tol_entry: float = 1e-4, tol_obj: float = 1e-5) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        u = rng.uniform(size=n)
        v = rng.uniform(size=n)
        inst = JointProbInstance(u / u.sum(), v / v.sum(), rng.uniform(size=(n, n)), lam=0.5)
        ref = sinkhorn(inst.u, inst.v, inst.cost, inst.lam, tol=1e-12)
        res = solve(build_joint_prob(inst), AuglagConfig())
        p = res.x.reshape(n, n, order="F")
        entry = float(np.max(np.abs(p - ref)))
        f_ref = joint_prob_objective(ref, inst.cost, inst.lam, "entropy")
        rel = abs(joint_prob_objective(p, inst.cost, inst.lam, "entropy") - f_ref) / abs(f_ref)
        out.append(CaseResult(f"sinkhorn/{n}x{n}/entries", entry <= tol_entry, entry, tol_entry))
        out.append(CaseResult(f"sinkhorn/{n}x{n}/objective", rel <= tol_obj, rel, tol_obj))
        out.append(CaseResult(f"sinkhorn/{n}x{n}/violation", res.violation <= 1e-6, res.violation, 1e-6))
    return out


SUITES: dict[str, Callable[..., list[CaseResult]]] = {
    "gradients": gradient_suite,
    "two-loop": two_loop_suite,
    "sinkhorn": sinkhorn_suite,
    "working-set": working_set_suite,
}
