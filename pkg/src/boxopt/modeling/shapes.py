"""Shape inference for model expressions.

Every node gets a ``(rows, cols)`` pair of dimension variables. Parameter
shapes are known from their data, variable shapes start unknown and are
solved by unification (``A*x`` forces ``rows(x) = cols(A)``). Scalars
broadcast in ``+``, ``-``, ``.*``, ``*`` and in relations.

A numeric literal on the right of ``*`` after a non-scalar stands for a
constant column vector, so ``P*1`` is the vector of row sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from .ast import (
    BinOp,
    Call,
    Decl,
    Expr,
    Kind,
    Model,
    ModelError,
    Name,
    Neg,
    Number,
    Pos,
    Transpose,
    VectorLit,
)


class ShapeError(ModelError):
    def __init__(self, message: str, pos: Pos, sites: tuple[Pos, ...] = ()):
        self.sites = sites
        super().__init__(message, pos)


class _Dim:
    __slots__ = ("parent", "value", "site", "label")

    def __init__(self, value: Optional[int] = None, site: Optional[Pos] = None, label: str = ""):
        self.parent: Optional[_Dim] = None
        self.value = value
        self.site = site
        self.label = label

    def root(self) -> "_Dim":
        d = self
        while d.parent is not None:
            d = d.parent
        # path compression
        cur = self
        while cur.parent is not None and cur.parent is not d:
            cur.parent, cur = d, cur.parent
        return d

    def resolved(self) -> Optional[int]:
        return self.root().value


def _unify(a: _Dim, b: _Dim, where: Pos, what: str) -> None:
    ra, rb = a.root(), b.root()
    if ra is rb:
        return
    if ra.value is not None and rb.value is not None and ra.value != rb.value:
        sa, sb = ra.site or where, rb.site or where
        raise ShapeError(
            f"shape conflict in {what}: {ra.label or 'a dimension'} is {ra.value} (from {sa}) "
            f"but {rb.label or 'a dimension'} is {rb.value} (from {sb})",
            where,
            sites=(sa, sb),
        )
    keep, drop = (ra, rb) if ra.value is not None or rb.value is None else (rb, ra)
    drop.parent = keep
    if keep.site is None:
        keep.site = drop.site or where


Shape2 = tuple[_Dim, _Dim]


def _fixed(rows: int, cols: int, site: Optional[Pos] = None, label: str = "") -> Shape2:
    return (_Dim(rows, site, f"rows of {label}" if label else ""), _Dim(cols, site, f"columns of {label}" if label else ""))


def _is_scalar(s: Shape2) -> bool:
    return s[0].resolved() == 1 and s[1].resolved() == 1


@dataclass
class ShapeEnv:
    """Concrete shapes of every declared name and of every expression node.

    Node shapes are keyed by ``id(node)`` because structurally equal nodes
    can have different shapes (the literal ``1`` in ``P*1`` and ``x + 1``).
    """

    names: dict[str, tuple[int, int]]
    nodes: dict[int, tuple[int, int]] = field(repr=False)
    ones_literals: set[int] = field(default_factory=set, repr=False)
    model: Optional[Model] = field(default=None, repr=False)

    def of(self, node: Expr) -> tuple[int, int]:
        return self.nodes[id(node)]

    def __getitem__(self, name: str) -> tuple[int, int]:
        return self.names[name]


def _normalize_param_shape(decl: Decl, shape) -> tuple[int, int]:
    shape = tuple(int(s) for s in shape)
    if decl.kind is Kind.SCALAR:
        if shape not in ((), (1,), (1, 1)):
            raise ShapeError(f"Scalar {decl.name} bound to data of shape {shape}", decl.pos)
        return (1, 1)
    if decl.kind is Kind.VECTOR:
        if len(shape) == 1:
            return (shape[0], 1)
        if len(shape) == 2 and 1 in shape:
            return (shape[0] * shape[1], 1)
        raise ShapeError(f"Vector {decl.name} bound to data of shape {shape}", decl.pos)
    if len(shape) == 1:
        return (shape[0], 1)
    if len(shape) != 2:
        raise ShapeError(f"Matrix {decl.name} bound to data of shape {shape}", decl.pos)
    return shape  # type: ignore[return-value]


class _Checker:
    def __init__(self, model: Model, parameter_shapes: Mapping[str, tuple]):
        self.model = model
        self.nodes: dict[int, Shape2] = {}
        self.keep: list[Expr] = []
        self.ones: set[int] = set()
        self.names: dict[str, Shape2] = {}
        for d in model.parameters:
            if d.name not in parameter_shapes:
                raise ShapeError(f"no shape for parameter {d.name!r}", d.pos)
            r, c = _normalize_param_shape(d, parameter_shapes[d.name])
            self.names[d.name] = _fixed(r, c, d.pos, d.name)
        for d in model.variables:
            rows = _Dim(None, None, f"rows of {d.name}")
            cols = _Dim(None, None, f"columns of {d.name}")
            if d.kind is Kind.SCALAR:
                rows.value, rows.site = 1, d.pos
                cols.value, cols.site = 1, d.pos
            elif d.kind is Kind.VECTOR:
                cols.value, cols.site = 1, d.pos
            self.names[d.name] = (rows, cols)

    def visit(self, node: Expr, ones_len: Optional[_Dim] = None) -> Shape2:
        shape = self._visit(node, ones_len)
        self.nodes[id(node)] = shape
        self.keep.append(node)
        return shape

    def _visit(self, node: Expr, ones_len: Optional[_Dim]) -> Shape2:
        if isinstance(node, Number):
            if ones_len is not None:
                self.ones.add(id(node))
                return (ones_len, _Dim(1, node.pos))
            return _fixed(1, 1, node.pos)
        if isinstance(node, VectorLit):
            return _fixed(len(node.values), 1, node.pos)
        if isinstance(node, Name):
            return self.names[node.name]
        if isinstance(node, Neg):
            return self.visit(node.operand)
        if isinstance(node, Transpose):
            r, c = self.visit(node.operand)
            return (c, r)
        if isinstance(node, Call):
            inner = self.visit(node.arg)
            if node.func in ("norm2", "sum"):
                return _fixed(1, 1, node.pos)
            return inner
        if isinstance(node, BinOp):
            return self._binop(node)
        raise TypeError(f"not an expression node: {node!r}")

    def _binop(self, node: BinOp) -> Shape2:
        left = self.visit(node.left)
        if node.op == "*" and isinstance(node.right, Number) and not _is_scalar(left):
            right = self.visit(node.right, ones_len=left[1])
        else:
            right = self.visit(node.right)
        op = node.op
        if op == "/":
            _unify(right[0], _Dim(1, node.right.pos, "divisor rows"), node.pos, "'/' (divisor must be scalar)")
            _unify(right[1], _Dim(1, node.right.pos, "divisor columns"), node.pos, "'/' (divisor must be scalar)")
            return left
        if op == "*":
            if _is_scalar(left):
                return right
            if _is_scalar(right) and id(node.right) not in self.ones:
                return left
            _unify(left[1], right[0], node.pos, "'*' (inner dimensions)")
            return (left[0], right[1])
        return self._broadcast(left, right, node.pos, f"'{op}'")

    def _broadcast(self, left: Shape2, right: Shape2, pos: Pos, what: str) -> Shape2:
        if _is_scalar(left):
            return right
        if _is_scalar(right):
            return left
        _unify(left[0], right[0], pos, what)
        _unify(left[1], right[1], pos, what)
        return left

    def run(self) -> ShapeEnv:
        model = self.model
        obj = self.visit(model.objective)
        _unify(obj[0], _Dim(1, model.objective.pos, "objective rows"), model.objective.pos, "objective (must be scalar)")
        _unify(obj[1], _Dim(1, model.objective.pos, "objective columns"), model.objective.pos, "objective (must be scalar)")
        for c in model.constraints:
            lhs = self.visit(c.lhs)
            rhs = self.visit(c.rhs)
            self._broadcast(lhs, rhs, c.pos, f"'{c.relation.value}'")

        for d in model.variables:
            r, cdim = self.names[d.name]
            if r.resolved() is None or cdim.resolved() is None:
                raise ShapeError(f"cannot infer the shape of variable {d.name!r}", d.pos)

        names = {k: (v[0].resolved(), v[1].resolved()) for k, v in self.names.items()}
        nodes = {}
        for key, (r, cdim) in self.nodes.items():
            rv, cv = r.resolved(), cdim.resolved()
            if rv is None or cv is None:
                raise ShapeError("cannot infer an expression shape", self.keep[0].pos)
            nodes[key] = (rv, cv)
        return ShapeEnv(names, nodes, set(self.ones), model)


def shape_check(model: Model, parameter_shapes: Mapping[str, tuple]) -> ShapeEnv:
    """Infer the shape of every node and variable.

    ``parameter_shapes`` maps parameter names to their data shapes; a
    Vector parameter may be given as ``(n,)``, ``(n, 1)`` or ``(1, n)``.
    Raises :class:`ShapeError` naming both sites of a conflict.
    """
    return _Checker(model, parameter_shapes).run()
