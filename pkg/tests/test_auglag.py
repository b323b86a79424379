import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boxopt.auglag import (
    AuglagConfig,
    ConstrainedProblem,
    Multipliers,
    Status,
    auglag_value_grad,
    constraint_violation,
    kkt_residuals,
    solve,
    update_multipliers,
    update_rho,
)
from boxopt.checks import gradient_error
from boxopt.kernels import BoxBounds, DimensionError, clip_to_box
from boxopt.problems import build_dual_svm, build_joint_prob, build_nnls, gen_joint_prob, gen_svm_blobs
from boxopt.solver import SolverConfig, minimize


def zero_objective(x):
    return 0.0, np.zeros_like(x)


def identity_block(x):
    return x.copy(), lambda v: np.asarray(v, float).copy()


def scalar_problem(**kw):
    return ConstrainedProblem(n=1, objective=zero_objective, bounds=BoxBounds.unbounded(1), **kw)


def test_value_grad_equality_example():
    prob = scalar_problem(eq=identity_block, n_eq=1)
    val, grad = auglag_value_grad(prob, np.array([3.0]), Multipliers(np.zeros(1), np.zeros(0), 2.0))
    assert val == 9.0 and grad.tolist() == [6.0]


def test_value_grad_inactive_inequality():
    prob = scalar_problem(ineq=identity_block, n_ineq=1)
    val, grad = auglag_value_grad(prob, np.array([-1.0]), Multipliers(np.zeros(0), np.array([0.2]), 1.0))
    assert val == 0.0 and grad.tolist() == [0.0]


def polynomial_problem(rng, n=5):
    ch = rng.standard_normal((2, n))
    cg = rng.standard_normal((2, n))
    q = rng.standard_normal((n, n))

    def objective(x):
        return float(x @ q @ x + np.sum(x**4)), (q + q.T) @ x + 4 * x**3

    def eq(x):
        vals = np.array([ch[0] @ x**2 - 1.0, ch[1] @ x + x[0] * x[1]])
        jac = np.vstack([2 * ch[0] * x, ch[1] + np.eye(n)[0] * x[1] + np.eye(n)[1] * x[0]])
        return vals, lambda v: jac.T @ v

    def ineq(x):
        vals = np.array([cg[0] @ x**3, cg[1] @ x - 0.5])
        jac = np.vstack([3 * cg[0] * x**2, cg[1]])
        return vals, lambda v: jac.T @ v

    return ConstrainedProblem(n=n, objective=objective, bounds=BoxBounds.unbounded(n), eq=eq, n_eq=2, ineq=ineq, n_ineq=2)


def test_value_grad_matches_finite_differences(rng):
    for _ in range(20):
        prob = polynomial_problem(rng)
        mult = Multipliers(rng.standard_normal(2), rng.uniform(0, 1, 2), float(rng.uniform(0.5, 10)))
        x = rng.uniform(-1, 1, 5)
        assert gradient_error(lambda z: auglag_value_grad(prob, z, mult), x) <= 1e-6


def test_update_multipliers_examples():
    m = Multipliers(np.array([0.0]), np.zeros(0), 1.0)
    assert update_multipliers(m, np.array([0.5]), np.zeros(0)).lam.tolist() == [0.5]
    m = Multipliers(np.zeros(0), np.array([0.2]), 1.0)
    assert update_multipliers(m, np.zeros(0), np.array([-1.0])).mu.tolist() == [0.0]
    m = Multipliers(np.zeros(0), np.array([0.0]), 4.0)
    out = update_multipliers(m, np.zeros(0), np.array([0.25]))
    assert out.mu.tolist() == [1.0] and out.rho == 4.0


def test_update_multipliers_dimension_mismatch():
    with pytest.raises(DimensionError):
        update_multipliers(Multipliers(np.zeros(2), np.zeros(0), 1.0), np.zeros(3), np.zeros(0))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), st.floats(0.01, 100))
def test_mu_stays_nonnegative(g, rho):
    mu = np.abs(np.asarray(g)) * 0.1
    out = update_multipliers(Multipliers(np.zeros(0), mu, rho), np.zeros(0), np.asarray(g))
    assert np.all(out.mu >= 0)


def test_constraint_violation_examples():
    assert constraint_violation(np.array([0.1, -0.3]), np.array([-5.0])) == 0.3
    assert constraint_violation(np.zeros(0), np.array([0.2, -0.1])) == 0.2
    assert constraint_violation(np.array([0.0]), np.array([0.0])) == 0.0
    assert constraint_violation(np.zeros(0), np.zeros(0)) == 0.0


def test_update_rho_examples():
    cfg = AuglagConfig()
    assert update_rho(1.0, 1.0, 0.6, cfg) == 2.0
    assert update_rho(1.0, 1.0, 0.4, cfg) == 1.0
    assert update_rho(cfg.rho_cap, 1.0, 0.9, cfg) == cfg.rho_cap


def test_config_validation():
    for bad in ({"feas_tol": 0}, {"rho_factor": 1.0}, {"rho0": 0}):
        with pytest.raises(ValueError):
            AuglagConfig(**bad)


def test_equality_constrained_scalar():
    prob = ConstrainedProblem(
        n=1,
        objective=lambda x: (float(x[0] ** 2), 2 * x),
        bounds=BoxBounds.unbounded(1),
        eq=lambda x: (x - 1.0, lambda v: np.asarray(v, float).copy()),
        n_eq=1,
    )
    res = solve(prob)
    assert res.status is Status.CONVERGED
    assert res.x[0] == pytest.approx(1.0, abs=1e-6)
    assert res.multipliers.lam[0] == pytest.approx(-2.0, abs=1e-5)
    assert res.violation <= AuglagConfig().feas_tol


def test_kkt_at_exact_point():
    prob = ConstrainedProblem(
        n=1,
        objective=lambda x: (float(x[0] ** 2), 2 * x),
        bounds=BoxBounds.unbounded(1),
        eq=lambda x: (x - 1.0, lambda v: np.asarray(v, float).copy()),
        n_eq=1,
    )
    assert kkt_residuals(prob, np.array([1.0]), Multipliers(np.array([-2.0]), np.zeros(0), 1.0)) == (0.0, 0.0, 0.0)
    stat, viol, comp = kkt_residuals(prob, np.array([1.0]), Multipliers(np.array([0.0]), np.zeros(0), 1.0))
    assert viol == 0.0 and stat > 0 and comp == 0.0


def simplex_ls(a, b):
    n = a.shape[1]
    fun, box = build_nnls((a, b))
    ones = np.ones(n)
    return ConstrainedProblem(
        n=n, objective=fun, bounds=box, eq=lambda x: (np.array([x.sum() - 1.0]), lambda v: v[0] * ones), n_eq=1
    )


def test_simplex_projection():
    res = solve(simplex_ls(np.eye(2), np.array([2.0, 0.0])))
    assert res.status is Status.CONVERGED
    assert np.allclose(res.x, [1.0, 0.0], atol=1e-6)


def test_unconstrained_is_single_minimize(rng):
    a = rng.standard_normal((20, 10))
    b = rng.standard_normal(20)
    fun, box = build_nnls((a, b))
    cfg = AuglagConfig()
    res = solve(ConstrainedProblem(n=10, objective=fun, bounds=box), cfg)
    ref = minimize(fun, box, clip_to_box(np.zeros(10), box), cfg.inner)
    assert res.outer_iters == 1
    assert np.array_equal(res.x, ref.x)
    assert res.f == ref.f and res.inner_iters == ref.iterations


def test_rho_monotone_and_capped(rng):
    cfg = AuglagConfig(rho_cap=8.0)
    rhos = []
    prob = polynomial_problem(rng)
    solve(prob, cfg, callback=lambda k, x, m, v: rhos.append(m.rho))
    assert all(b >= a for a, b in zip(rhos, rhos[1:]))
    assert max(rhos) <= 8.0


def convex_instances(seed):
    rng = np.random.default_rng(seed)
    yield "simplex", simplex_ls(rng.standard_normal((15, 8)), rng.standard_normal(15))
    pts, labels = gen_svm_blobs(40, seed)
    yield "svm", build_dual_svm(pts, labels)[0]
    yield "joint", build_joint_prob(gen_joint_prob(8, 1, seed, "entropy"))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_kkt_small_at_convergence(seed):
    cfg = AuglagConfig()
    for name, prob in convex_instances(seed):
        res = solve(prob, cfg)
        assert res.status is Status.CONVERGED, name
        assert prob.bounds.contains(res.x)
        assert np.all(res.multipliers.mu >= 0)
        stat, viol, comp = kkt_residuals(prob, res.x, res.multipliers, cfg.inner.eps_active)
        assert max(stat, viol, comp) <= 10 * cfg.feas_tol, (name, stat, viol, comp)


def test_inner_failure_reported():
    # the objective blows up away from the start, so no step is ever accepted
    def cliff(x):
        if x[0] != 0.0:
            return np.inf, np.zeros(1)
        return 0.0, np.array([-1.0])

    prob = ConstrainedProblem(n=1, objective=cliff, bounds=BoxBounds.unbounded(1), eq=lambda x: (x.copy(), lambda v: v), n_eq=1)
    res = solve(prob, AuglagConfig(inner=SolverConfig(max_backtracks=3)))
    assert res.status is Status.INNER_FAILURE


def test_max_outer_reported():
    prob = ConstrainedProblem(
        n=1,
        objective=lambda x: (float(x[0] ** 2), 2 * x),
        bounds=BoxBounds.unbounded(1),
        eq=lambda x: (x - 1.0, lambda v: np.asarray(v, float).copy()),
        n_eq=1,
    )
    res = solve(prob, AuglagConfig(max_outer=1))
    assert res.status is Status.MAX_OUTER and res.outer_iters == 1
