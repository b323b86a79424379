"""Lower a checked model to straight-line programs with reverse-mode gradients.

Each program is a list of instructions over 2-D arrays. Evaluating one
records the forward values on a per-call tape; the backward sweep reads
the tape and accumulates adjoints into a flat gradient over ``x``. Matrix
variables occupy contiguous column-major slices of ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from ..auglag import ConstrainedProblem
from ..kernels import BoxBounds, DimensionError, as_vector
from ..solver import EvaluationError
from .ast import (
    BinOp,
    Call,
    Constraint,
    Expr,
    Kind,
    Model,
    ModelError,
    Name,
    Neg,
    Number,
    Relation,
    Transpose,
    VectorLit,
    names_in,
)
from .shapes import ShapeEnv, shape_check

LOG_FLOOR = -745.0


class DomainError(EvaluationError):
    """An elementwise function was applied outside its domain."""


class BindingError(ModelError):
    pass


@dataclass(frozen=True)
class Instr:
    op: str
    args: tuple[int, ...]
    shape: tuple[int, int]
    data: Any = None
    active: bool = False  # depends on x


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # matrix-vector products go through gemv so A^T v matches a direct A.T @ v
    if b.shape[1] == 1:
        return (a @ b[:, 0])[:, None]
    return a @ b


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.full(shape, g.sum())


class Program:
    """Straight-line code for one or more outputs over a shared instruction list."""

    def __init__(self, n: int, log_floor: float):
        self.n = n
        self.log_floor = log_floor
        self.instrs: list[Instr] = []
        self._memo: dict[tuple, int] = {}

    def emit(self, op: str, args: tuple[int, ...], shape, data=None, key=None) -> int:
        if key is not None and key in self._memo:
            return self._memo[key]
        active = op == "var" or any(self.instrs[a].active for a in args)
        self.instrs.append(Instr(op, args, tuple(shape), data, active))
        idx = len(self.instrs) - 1
        if key is not None:
            self._memo[key] = idx
        return idx

    def forward(self, x: np.ndarray) -> list[np.ndarray]:
        vals: list[np.ndarray] = []
        for ins in self.instrs:
            vals.append(self._fwd(ins, vals, x))
        return vals

    def _fwd(self, ins: Instr, vals, x) -> np.ndarray:
        op = ins.op
        a = vals[ins.args[0]] if ins.args else None
        b = vals[ins.args[1]] if len(ins.args) > 1 else None
        if op == "var":
            lo, hi = ins.data
            return x[lo:hi].reshape(ins.shape, order="F")
        if op == "const":
            return ins.data
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "neg":
            return -a
        if op == "emul":
            return a * b
        if op == "matmul":
            return _mm(a, b)
        if op == "div":
            return a / b
        if op == "transpose":
            return a.T
        if op == "sum":
            return np.array([[a.sum()]])
        if op == "norm2":
            return np.array([[np.sqrt(np.sum(a * a))]])
        if op == "exp":
            return np.exp(a)
        if op == "log":
            if np.any(a <= 0):
                raise DomainError("log of a non-positive value")
            return np.log(a)
        if op == "log1p":
            if np.any(a <= -1):
                raise DomainError("log1p of a value <= -1")
            return np.log1p(a)
        if op == "xlogx":
            if np.any(a < 0):
                raise DomainError("x log x of a negative value")
            out = np.zeros_like(a)
            pos = a > 0
            out[pos] = a[pos] * np.log(a[pos])
            return out
        raise AssertionError(op)

    def backward(self, vals: list[np.ndarray], seeds: Mapping[int, np.ndarray]) -> np.ndarray:
        grad = np.zeros(self.n)
        adj: list[Optional[np.ndarray]] = [None] * len(self.instrs)
        for idx, seed in seeds.items():
            adj[idx] = seed if adj[idx] is None else adj[idx] + seed

        def acc(i: int, g: np.ndarray) -> None:
            if not self.instrs[i].active:
                return
            g = _unbroadcast(g, self.instrs[i].shape)
            adj[i] = g if adj[i] is None else adj[i] + g

        for idx in range(len(self.instrs) - 1, -1, -1):
            g = adj[idx]
            ins = self.instrs[idx]
            if g is None or not ins.active:
                continue
            op = ins.op
            args = ins.args
            if op == "var":
                lo, hi = ins.data
                grad[lo:hi] += g.reshape(-1, order="F")
            elif op == "add":
                acc(args[0], g)
                acc(args[1], g)
            elif op == "sub":
                acc(args[0], g)
                acc(args[1], -g)
            elif op == "neg":
                acc(args[0], -g)
            elif op == "emul":
                a, b = vals[args[0]], vals[args[1]]
                if self.instrs[args[0]].active:
                    acc(args[0], g * b)
                if self.instrs[args[1]].active:
                    acc(args[1], g * a)
            elif op == "matmul":
                a, b = vals[args[0]], vals[args[1]]
                if self.instrs[args[0]].active:
                    acc(args[0], g @ b.T)
                if self.instrs[args[1]].active:
                    acc(args[1], _mm(a.T, g))
            elif op == "div":
                a, b = vals[args[0]], vals[args[1]]
                if self.instrs[args[0]].active:
                    acc(args[0], g / b)
                if self.instrs[args[1]].active:
                    acc(args[1], np.array([[-np.sum(g * a) / (b[0, 0] ** 2)]]))
            elif op == "transpose":
                acc(args[0], g.T)
            elif op == "sum":
                acc(args[0], np.full(self.instrs[args[0]].shape, g[0, 0]))
            elif op == "norm2":
                a = vals[args[0]]
                nrm = vals[idx][0, 0]
                # zero subgradient at the kink
                acc(args[0], g[0, 0] * a / nrm if nrm > 0 else np.zeros_like(a))
            elif op == "exp":
                acc(args[0], g * vals[idx])
            elif op == "log":
                acc(args[0], g / vals[args[0]])
            elif op == "log1p":
                acc(args[0], g / (1.0 + vals[args[0]]))
            elif op == "xlogx":
                a = vals[args[0]]
                with np.errstate(divide="ignore"):
                    dlog = np.maximum(np.log(a) + 1.0, self.log_floor)
                acc(args[0], g * dlog)
            else:
                raise AssertionError(op)
        return grad


@dataclass(frozen=True)
class VariableSlot:
    name: str
    offset: int
    shape: tuple[int, int]

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def stop(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True)
class ConstraintBlock:
    constraint: Constraint
    root: int
    offset: int
    size: int


@dataclass
class CompiledModel:
    model: Model
    env: ShapeEnv
    slots: dict[str, VariableSlot]
    n: int
    bounds: BoxBounds
    objective_program: Program = field(repr=False)
    objective_root: int = field(repr=False)
    eq_program: Program = field(repr=False)
    eq_blocks: tuple[ConstraintBlock, ...] = ()
    ineq_program: Program = field(repr=False, default=None)  # type: ignore[assignment]
    ineq_blocks: tuple[ConstraintBlock, ...] = ()
    absorbed: tuple[Constraint, ...] = ()

    @property
    def n_eq(self) -> int:
        return sum(b.size for b in self.eq_blocks)

    @property
    def n_ineq(self) -> int:
        return sum(b.size for b in self.ineq_blocks)

    def _check_x(self, x) -> np.ndarray:
        x = as_vector(x)
        if len(x) != self.n:
            raise DimensionError(f"x has length {len(x)}, model has {self.n} variables")
        return x

    def gather(self, x, name: str) -> np.ndarray:
        """The value of variable ``name`` inside the flat vector ``x``."""
        slot = self.slots[name]
        x = self._check_x(x)
        arr = x[slot.offset:slot.stop].reshape(slot.shape, order="F")
        return arr[:, 0].copy() if slot.shape[1] == 1 else arr.copy()

    def scatter(self, values: Mapping[str, Any]) -> np.ndarray:
        """Flat ``x`` from per-variable values; missing variables are zero."""
        x = np.zeros(self.n)
        for name, value in values.items():
            slot = self.slots[name]
            arr = np.asarray(value, dtype=np.float64)
            if arr.size != slot.size:
                raise DimensionError(f"{name} needs {slot.size} entries, got {arr.size}")
            arr = arr.reshape(slot.shape) if arr.ndim == 2 else arr.reshape(slot.shape, order="F")
            x[slot.offset:slot.stop] = arr.reshape(-1, order="F")
        return x

    def eval_with_gradient(self, x) -> tuple[float, np.ndarray]:
        x = self._check_x(x)
        prog = self.objective_program
        vals = prog.forward(x)
        f = float(vals[self.objective_root][0, 0])
        grad = prog.backward(vals, {self.objective_root: np.ones((1, 1))})
        return f, grad

    def _block_eval(self, prog: Program, blocks, x):
        vals = prog.forward(x)
        resid = np.concatenate([vals[b.root].reshape(-1, order="F") for b in blocks]) if blocks else np.zeros(0)
        size = sum(b.size for b in blocks)

        def vjp(v) -> np.ndarray:
            v = as_vector(v, "v")
            if len(v) != size:
                raise DimensionError(f"multiplier vector has length {len(v)}, block has {size}")
            if not blocks:
                return np.zeros(self.n)
            seeds: dict[int, np.ndarray] = {}
            for b in blocks:
                shape = prog.instrs[b.root].shape
                seed = v[b.offset:b.offset + b.size].reshape(shape, order="F")
                seeds[b.root] = seeds[b.root] + seed if b.root in seeds else seed
            return prog.backward(vals, seeds)

        return resid, vjp

    def equality(self, x):
        return self._block_eval(self.eq_program, self.eq_blocks, self._check_x(x))

    def inequality(self, x):
        return self._block_eval(self.ineq_program, self.ineq_blocks, self._check_x(x))

    def constraint_eval(self, x, v_eq, v_ineq):
        h, h_vjp = self.equality(x)
        g, g_vjp = self.inequality(x)
        return h, h_vjp(v_eq), g, g_vjp(v_ineq)

    def problem(self) -> ConstrainedProblem:
        return ConstrainedProblem(
            n=self.n,
            objective=self.eval_with_gradient,
            bounds=self.bounds,
            eq=self.equality if self.eq_blocks else None,
            n_eq=self.n_eq,
            ineq=self.inequality if self.ineq_blocks else None,
            n_ineq=self.n_ineq,
        )


def _as_param(decl, value, shape: tuple[int, int]) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise BindingError(f"parameter {decl.name!r} has non-finite entries", decl.pos)
    if decl.kind is Kind.MATRIX and arr.ndim == 2:
        return arr.reshape(shape)
    return arr.reshape(shape, order="F")


class _Lowering:
    def __init__(self, env: ShapeEnv, slots, params, n: int, log_floor: float):
        self.env = env
        self.slots = slots
        self.params = params
        self.n = n
        self.log_floor = log_floor

    def lower(self, prog: Program, node: Expr) -> int:
        shape = self.env.of(node)
        key = (node, shape)
        if isinstance(node, Number):
            return prog.emit("const", (), shape, np.full(shape, node.value), key=key)
        if isinstance(node, VectorLit):
            return prog.emit("const", (), shape, np.array(node.values, dtype=np.float64)[:, None], key=key)
        if isinstance(node, Name):
            if node.name in self.slots:
                slot = self.slots[node.name]
                return prog.emit("var", (), shape, (slot.offset, slot.stop), key=key)
            return prog.emit("const", (), shape, self.params[node.name], key=key)
        if isinstance(node, Neg):
            return prog.emit("neg", (self.lower(prog, node.operand),), shape, key=key)
        if isinstance(node, Transpose):
            return prog.emit("transpose", (self.lower(prog, node.operand),), shape, key=key)
        if isinstance(node, Call):
            return prog.emit(node.func, (self.lower(prog, node.arg),), shape, key=key)
        if isinstance(node, BinOp):
            fused = _xlogx_operand(node)
            if fused is not None:
                return prog.emit("xlogx", (self.lower(prog, fused),), shape, key=key)
            a = self.lower(prog, node.left)
            b = self.lower(prog, node.right)
            sa, sb = prog.instrs[a].shape, prog.instrs[b].shape
            if node.op == "+":
                op = "add"
            elif node.op == "-":
                op = "sub"
            elif node.op == ".*":
                op = "emul"
            elif node.op == "/":
                op = "div"
            elif (sa == (1, 1) or sb == (1, 1)) and id(node.right) not in self.env.ones_literals:
                op = "emul"
            else:
                op = "matmul"
            return prog.emit(op, (a, b), shape, key=key)
        raise TypeError(f"not an expression node: {node!r}")

    def residual(self, prog: Program, c: Constraint) -> int:
        lhs = self.lower(prog, c.lhs)
        rhs = self.lower(prog, c.rhs)
        sl, sr = prog.instrs[lhs].shape, prog.instrs[rhs].shape
        shape = sl if sr == (1, 1) else sr
        if c.relation is Relation.GE:
            return prog.emit("sub", (rhs, lhs), shape)
        return prog.emit("sub", (lhs, rhs), shape)


def _xlogx_operand(node: BinOp) -> Optional[Expr]:
    """The shared operand of ``P .* log(P)`` or ``log(P) .* P``, else None."""
    if node.op != ".*":
        return None
    left, right = node.left, node.right
    if isinstance(right, Call) and right.func == "log" and right.arg == left:
        return left
    if isinstance(left, Call) and left.func == "log" and left.arg == right:
        return right
    return None


def _bound_target(c: Constraint, variables: set[str]) -> Optional[tuple[str, str, Expr]]:
    """``(variable, 'lower'|'upper', constant expr)`` if ``c`` can become a bound."""
    if c.relation is Relation.EQ:
        return None
    for var_side, const_side, flip in ((c.lhs, c.rhs, False), (c.rhs, c.lhs, True)):
        if isinstance(var_side, Name) and var_side.name in variables and not (names_in(const_side) & variables):
            ge = (c.relation is Relation.GE) != flip
            return var_side.name, "lower" if ge else "upper", const_side
    return None


def compile_model(
    model: Model,
    bindings: Mapping[str, Any],
    absorb_bounds: bool = True,
    log_floor: float = LOG_FLOOR,
) -> tuple[CompiledModel, ConstrainedProblem]:
    """Check shapes against the bound data and build evaluators.

    Constraints ``var >= c`` and ``var <= c`` with ``c`` free of variables
    become box bounds unless ``absorb_bounds`` is off; everything else
    becomes an equality block (``==``) or an inequality block ``g <= 0``.
    """
    params: dict[str, np.ndarray] = {}
    shapes: dict[str, tuple] = {}
    for d in model.parameters:
        if d.name not in bindings:
            raise BindingError(f"parameter {d.name!r} is not bound", d.pos)
        arr = np.asarray(bindings[d.name], dtype=np.float64)
        shapes[d.name] = arr.shape
    env = shape_check(model, shapes)
    for d in model.parameters:
        params[d.name] = _as_param(d, bindings[d.name], env[d.name])

    slots: dict[str, VariableSlot] = {}
    offset = 0
    for d in model.variables:
        slot = VariableSlot(d.name, offset, env[d.name])
        slots[d.name] = slot
        offset = slot.stop
    n = offset

    low = _Lowering(env, slots, params, n, log_floor)
    obj_prog = Program(n, log_floor)
    obj_root = low.lower(obj_prog, model.objective)

    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    variables = {d.name for d in model.variables}
    absorbed = []
    eq_prog, ineq_prog = Program(n, log_floor), Program(n, log_floor)
    eq_blocks: list[ConstraintBlock] = []
    ineq_blocks: list[ConstraintBlock] = []
    const_prog = Program(n, log_floor)
    for c in model.constraints:
        target = _bound_target(c, variables) if absorb_bounds else None
        if target is not None:
            name, side, expr = target
            slot = slots[name]
            root = low.lower(const_prog, expr)
            value = const_prog.forward(np.zeros(n))[root]
            value = np.broadcast_to(value, slot.shape).reshape(-1, order="F")
            seg = slice(slot.offset, slot.stop)
            if side == "lower":
                lower[seg] = np.maximum(lower[seg], value)
            else:
                upper[seg] = np.minimum(upper[seg], value)
            absorbed.append(c)
            continue
        if c.relation is Relation.EQ:
            prog, blocks = eq_prog, eq_blocks
        else:
            prog, blocks = ineq_prog, ineq_blocks
        root = low.residual(prog, c)
        r, k = prog.instrs[root].shape
        start = blocks[-1].offset + blocks[-1].size if blocks else 0
        blocks.append(ConstraintBlock(c, root, start, r * k))

    try:
        bounds = BoxBounds(lower, upper)
    except ValueError as exc:
        raise BindingError(f"absorbed bounds are inconsistent: {exc}") from None

    compiled = CompiledModel(
        model=model,
        env=env,
        slots=slots,
        n=n,
        bounds=bounds,
        objective_program=obj_prog,
        objective_root=obj_root,
        eq_program=eq_prog,
        eq_blocks=tuple(eq_blocks),
        ineq_program=ineq_prog,
        ineq_blocks=tuple(ineq_blocks),
        absorbed=tuple(absorbed),
    )
    return compiled, compiled.problem()


def eval_with_gradient(model: CompiledModel, x) -> tuple[float, np.ndarray]:
    """Objective value and its gradient over the flat variable vector."""
    return model.eval_with_gradient(x)


def constraint_eval(model: CompiledModel, x, v_eq, v_ineq):
    """``(h, J_h^T v_eq, g, J_g^T v_ineq)`` with one reverse sweep per block family."""
    return model.constraint_eval(x, v_eq, v_ineq)
