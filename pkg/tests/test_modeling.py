import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boxopt.auglag import AuglagConfig, Status, solve
from boxopt.checks import gradient_error, vjp_error
from boxopt.kernels import DimensionError
from boxopt.modeling import (
    BinOp,
    Constraint,
    BindingError,
    Call,
    DomainError,
    DuplicateDeclarationError,
    Kind,
    ModelSyntaxError,
    Name,
    Neg,
    Number,
    Relation,
    Role,
    ShapeError,
    Transpose,
    UndeclaredIdentifierError,
    VectorLit,
    compile_model,
    constraint_eval,
    eval_with_gradient,
    parse,
    shape_check,
    to_source,
    to_text,
)
from boxopt.modeling.printer import constraint_text

SIMPLEX_LS = """\
parameters
  Matrix A
  Vector b
variables
  Vector x
min
  norm2(A*x - b)
st
  sum(x) == 1
  x >= 0
"""


def one_var(objective, kind="Vector", constraints=""):
    src = f"variables\n  {kind} x\nmin\n  {objective}\n"
    if constraints:
        src += "st\n" + "".join(f"  {c}\n" for c in constraints)
    return parse(src)


# parsing


def test_parse_simplex_model():
    m = parse(SIMPLEX_LS)
    assert [(d.name, d.kind, d.role) for d in m.parameters] == [("A", Kind.MATRIX, Role.PARAMETER), ("b", Kind.VECTOR, Role.PARAMETER)]
    assert [(d.name, d.kind) for d in m.variables] == [("x", Kind.VECTOR)]
    assert m.objective == Call("norm2", BinOp("-", BinOp("*", Name("A"), Name("x")), Name("b")))
    assert m.constraints[0].lhs == Call("sum", Name("x"))
    assert m.constraints[0].relation is Relation.EQ and m.constraints[0].rhs == Number(1.0)
    assert (m.constraints[1].lhs, m.constraints[1].relation, m.constraints[1].rhs) == (Name("x"), Relation.GE, Number(0.0))


def test_parse_without_constraints():
    m = parse("variables\n  Vector x\nmin\n  norm2(x)\n")
    assert m.constraints == () and m.parameters == ()


def test_comments_and_whitespace_are_ignored():
    a = parse("variables Vector x # the unknown\nmin norm2(x)   # objective\n")
    b = parse("variables\nVector x\nmin\nnorm2(x)")
    assert a == b


def test_undeclared_identifier_reports_name_and_position():
    with pytest.raises(UndeclaredIdentifierError) as info:
        parse("variables\n  Vector x\nmin\n  norm2(x - y)\n")
    assert info.value.name == "y"
    assert (info.value.pos.line, info.value.pos.col) == (4, 13)
    assert "y" in str(info.value) and "line 4, column 13" in str(info.value)


def test_duplicate_declaration():
    with pytest.raises(DuplicateDeclarationError):
        parse("parameters\n  Vector x\nvariables\n  Vector x\nmin\n  sum(x)\n")


def test_multiple_objectives():
    with pytest.raises(ModelSyntaxError, match="objective"):
        parse("variables\n  Vector x\nmin\n  sum(x)\nmin\n  norm2(x)\n")


@pytest.mark.parametrize(
    "src, where",
    [
        ("variables\n  Vector x\n  norm2(x)\n", (3, 3)),  # missing min
        ("variables\n  Vector x\nmin\n  norm2(x\n", (5, 1)),  # unclosed paren
        ("variables\n  Vector x\nmin\n  max(x)\n", (4, 3)),  # unknown function
        ("variables\n  Tensor x\nmin\n  sum(x)\n", (2, 3)),  # unknown kind
        ("variables\n  Vector x\nmin\n  sum(x) $\n", (4, 10)),  # bad character
        ("min\n  sum(x)\n", (1, 1)),  # no variables section
        ("variables\n  Vector x\nmin\n  sum(x)\nst\n  x\n", (7, 1)),  # constraint without relation
    ],
)
def test_syntax_errors_carry_positions(src, where):
    with pytest.raises(ModelSyntaxError) as info:
        parse(src)
    assert (info.value.pos.line, info.value.pos.col) == where


def test_factor_grammar():
    m = one_var("-x' * x")
    assert m.objective == BinOp("*", Neg(Transpose(Name("x"))), Name("x"))
    assert one_var("sum(x .* [1, -2.5])").objective.arg.right == VectorLit((1.0, -2.5))


# printing round trip


NAMES = ["A", "b", "x", "P"]
leaves = st.one_of(
    st.sampled_from(NAMES).map(Name),
    st.floats(0, 1e6, allow_nan=False).map(Number),
    st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=3).map(lambda v: VectorLit(tuple(v))),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        children.map(Transpose),
        st.tuples(st.sampled_from(["+", "-", "*", ".*", "/"]), children, children).map(lambda t: BinOp(*t)),
        st.tuples(st.sampled_from(["norm2", "sum", "exp", "log", "log1p"]), children).map(lambda t: Call(*t)),
    )


exprs = st.recursive(leaves, _extend, max_leaves=12)


@given(exprs, st.lists(st.tuples(exprs, st.sampled_from(list(Relation)), exprs), max_size=3))
def test_print_parse_round_trip(objective, cons):
    src = "parameters\n  Matrix A\n  Vector b\nvariables\n  Vector x\n  Matrix P\nmin\n  " + to_text(objective) + "\n"
    if cons:
        src += "st\n" + "".join(f"  {constraint_text(Constraint(*c))}\n" for c in cons)
    m = parse(src)
    assert m.objective == objective
    assert [(c.lhs, c.relation, c.rhs) for c in m.constraints] == list(cons)
    assert parse(to_source(m)) == m


def test_printer_minimal_parentheses():
    m = parse("parameters\n Matrix A\n Vector b\nvariables\n Vector x\nmin\n (norm2((A*x) - b)) + -(x' * x) - (b - x)'*x\n")
    assert to_text(m.objective) == "norm2(A * x - b) + -(x' * x) - (b - x)' * x"


# shapes


def test_shape_inference_matvec():
    env = shape_check(parse(SIMPLEX_LS), {"A": (3, 2), "b": (3,)})
    assert env["x"] == (2, 1) and env["b"] == (3, 1)


def test_shape_conflict_reports_both_sites():
    with pytest.raises(ShapeError) as info:
        shape_check(parse(SIMPLEX_LS), {"A": (3, 2), "b": (2,)})
    sites = {(p.line, p.col) for p in info.value.sites}
    assert sites == {(2, 10), (3, 10)}  # declarations of A and b
    assert "line 2, column 10" in str(info.value) and "line 3, column 10" in str(info.value)


def test_ones_literal_reduction_is_scalar():
    m = parse("parameters\n  Matrix M\nvariables\n  Matrix P\nmin\n  sum(P*1) + sum(M .* P)\n")
    env = shape_check(m, {"M": (3, 4)})
    assert env["P"] == (3, 4)
    assert env.of(m.objective.left) == (1, 1)
    assert env.of(m.objective.left.arg) == (3, 1)


def test_uninferable_variable():
    with pytest.raises(ShapeError, match="cannot infer"):
        shape_check(parse("variables\n  Vector x\nmin\n  norm2(x)\n"), {})


def test_objective_must_be_scalar():
    with pytest.raises(ShapeError, match="objective"):
        shape_check(parse("parameters\n  Matrix A\nvariables\n  Vector x\nmin\n  A*x\n"), {"A": (3, 2)})


def test_vector_parameter_rejects_matrix_data():
    with pytest.raises(ShapeError):
        shape_check(parse(SIMPLEX_LS), {"A": (3, 2), "b": (3, 2)})


# compilation


def test_compile_simplex_model():
    cm, prob = compile_model(parse(SIMPLEX_LS), {"A": np.eye(2), "b": np.array([2.0, 0.0])})
    assert prob.n == 2 and prob.n_eq == 1 and prob.n_ineq == 0
    assert prob.bounds.lower.tolist() == [0.0, 0.0]
    assert prob.bounds.upper.tolist() == [np.inf, np.inf]
    h, _ = prob.eq(np.array([0.25, 0.5]))
    assert h.tolist() == [-0.25]


def test_linear_inequality_is_not_absorbed():
    src = "parameters\n  Matrix A\n  Vector b\nvariables\n  Vector x\nmin\n  norm2(x)\nst\n  A*x <= b\n"
    _, prob = compile_model(parse(src), {"A": np.ones((3, 2)), "b": np.ones(3)})
    assert prob.n_ineq == 3 and prob.n_eq == 0
    assert np.all(np.isinf(prob.bounds.lower)) and np.all(np.isinf(prob.bounds.upper))


def test_double_bound_absorption():
    src = "parameters\n  Vector c\nvariables\n  Vector x\nmin\n  norm2(x - c)\nst\n  x >= 0\n  x <= 1\n"
    cm, prob = compile_model(parse(src), {"c": np.array([2.0, -1.0, 0.5])})
    assert prob.n_ineq == 0 and prob.n_eq == 0
    assert prob.bounds.lower.tolist() == [0, 0, 0] and prob.bounds.upper.tolist() == [1, 1, 1]
    assert len(cm.absorbed) == 2


def test_reversed_bound_absorbed():
    m = one_var("norm2(x - [2, 3])", constraints=["1 >= x"])
    cm, prob = compile_model(m, {})
    assert prob.bounds.upper.tolist() == [1.0, 1.0] and prob.n_ineq == 0


def test_unbound_parameter():
    with pytest.raises(BindingError, match="b"):
        compile_model(parse(SIMPLEX_LS), {"A": np.eye(2)})


def test_non_finite_parameter():
    with pytest.raises(BindingError):
        compile_model(parse(SIMPLEX_LS), {"A": np.eye(2), "b": np.array([np.nan, 0.0])})


def test_norm2_value_and_gradient():
    cm, _ = compile_model(one_var("norm2(x)", constraints=["x <= [10, 10]"]), {})
    f, g = eval_with_gradient(cm, np.array([3.0, 4.0]))
    assert f == 5.0 and np.allclose(g, [0.6, 0.8], rtol=0, atol=1e-15)


def test_sum_exp_value_and_gradient():
    cm, _ = compile_model(one_var("sum(exp(x))", constraints=["x <= [1, 1]"]), {})
    f, g = eval_with_gradient(cm, np.zeros(2))
    assert f == 2.0 and g.tolist() == [1.0, 1.0]


def test_constraint_eval_simplex():
    cm, _ = compile_model(parse(SIMPLEX_LS), {"A": np.eye(2), "b": np.array([2.0, 0.0])})
    h, jh, g, jg = constraint_eval(cm, np.array([0.3, 0.3]), np.array([1.0]), np.zeros(0))
    assert h[0] == pytest.approx(-0.4, abs=1e-15)
    assert jh.tolist() == [1.0, 1.0] and g.size == 0 and jg.tolist() == [0.0, 0.0]


def test_constraint_eval_dimension_mismatch():
    cm, _ = compile_model(parse(SIMPLEX_LS), {"A": np.eye(2), "b": np.array([2.0, 0.0])})
    with pytest.raises(DimensionError):
        constraint_eval(cm, np.zeros(2), np.zeros(2), np.zeros(0))


def test_linear_block_vjp_is_exact(rng):
    src = "parameters\n  Matrix A\n  Vector b\nvariables\n  Vector x\nmin\n  norm2(x)\nst\n  A*x - b <= 0\n"
    a = rng.standard_normal((5, 4))
    cm, prob = compile_model(parse(src), {"A": a, "b": rng.standard_normal(5)})
    for _ in range(5):
        v = rng.standard_normal(5)
        _, jg = prob.ineq(rng.standard_normal(4))
        assert np.array_equal(jg(v), a.T @ v)


def test_flattening_is_column_major_and_bijective(rng):
    m = parse("parameters\n  Matrix M\n  Vector c\nvariables\n  Matrix P\n  Vector x\n  Scalar t\nmin\n  sum(M .* P) + norm2(x - c) + t\n")
    cm, _ = compile_model(m, {"M": rng.standard_normal((2, 3)), "c": rng.standard_normal(4)})
    assert cm.n == 6 + 4 + 1
    p = np.arange(6.0).reshape(2, 3)
    x = cm.scatter({"P": p, "x": [7, 8, 9, 10], "t": 11})
    assert x[:6].tolist() == [0, 3, 1, 4, 2, 5]
    assert np.array_equal(cm.gather(x, "P"), p)
    z = rng.standard_normal(cm.n)
    assert np.array_equal(cm.scatter({name: cm.gather(z, name) for name in cm.slots}), z)


def test_entropy_term_is_finite_at_zero():
    m = parse("variables\n  Matrix P\nmin\n  sum(P .* log(P))\nst\n  P*1 == [0.5, 0.5]\n  P'*1 == [0.5, 0.5]\n  P >= 0\n")
    cm, _ = compile_model(m, {})
    x = np.array([0.0, 0.5, 0.25, 0.0])
    f, g = cm.eval_with_gradient(x)
    assert f == pytest.approx(0.5 * np.log(0.5) + 0.25 * np.log(0.25))
    assert g[0] == -745.0 and g[3] == -745.0
    assert g[1] == pytest.approx(np.log(0.5) + 1)


def test_log_of_nonpositive_is_domain_error():
    cm, _ = compile_model(one_var("sum(log(x))", constraints=["x <= [1, 1]"]), {})
    with pytest.raises(DomainError):
        cm.eval_with_gradient(np.array([1.0, -1.0]))


RANDOM_MODELS = [
    "norm2(A*x - b) + sum(exp(x / 3)) - sum(log(x + 4)) + x' * x",
    "sum(log1p(exp(-(A*x)))) + 2 * norm2(x) - b' * (A*x)",
    "sum((A*x - b) .* (A*x - b)) / 4 + sum(exp(-x)) .* 0.5",
    "norm2(A' * b - x) * norm2(x) + sum(x .* log(x + 5))",
]


@pytest.mark.parametrize("objective", RANDOM_MODELS)
def test_random_models_match_finite_differences(objective, rng):
    src = (
        "parameters\n  Matrix A\n  Vector b\nvariables\n  Vector x\nmin\n  " + objective + "\n"
        "st\n  exp(A*x) - b .* b <= 1\n  sum(x .* x) == 1\n  log1p(x .* x) - x / 2 == 0\n"
    )
    n = int(rng.integers(3, 20))
    cm, prob = compile_model(parse(src), {"A": rng.standard_normal((4, n)) / 2, "b": rng.standard_normal(4)})
    for _ in range(5):
        x = rng.uniform(-1, 1, n)
        assert gradient_error(prob.objective, x) <= 1e-6
        assert vjp_error(prob.eq, x, rng.standard_normal(prob.n_eq)) <= 1e-6
        assert vjp_error(prob.ineq, x, rng.standard_normal(prob.n_ineq)) <= 1e-6


def test_absorption_on_and_off_agree(rng):
    src = (
        "parameters\n  Matrix A\n  Vector b\nvariables\n  Vector x\nmin\n  sum((A*x - b) .* (A*x - b))\n"
        "st\n  sum(x) == 1\n  x >= 0\n  x <= 0.6\n"
    )
    binds = {"A": rng.standard_normal((8, 5)), "b": rng.standard_normal(8)}
    _, on = compile_model(parse(src), binds)
    _, off = compile_model(parse(src), binds, absorb_bounds=False)
    assert on.n_ineq == 0 and off.n_ineq == 10
    # both runs stop at violation <= feas_tol, so the objective gap scales with it
    cfg = AuglagConfig(feas_tol=1e-9)
    r_on, r_off = solve(on, cfg), solve(off, cfg)
    assert r_on.status is Status.CONVERGED and r_off.status is Status.CONVERGED
    assert abs(r_on.f - r_off.f) <= 1e-6 * abs(r_on.f)


def test_dsl_simplex_solution():
    _, prob = compile_model(parse(SIMPLEX_LS), {"A": np.eye(2), "b": np.array([2.0, 0.0])})
    res = solve(prob, AuglagConfig())
    assert res.status is Status.CONVERGED
    assert np.allclose(res.x, [1.0, 0.0], atol=1e-6)
