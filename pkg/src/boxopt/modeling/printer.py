from __future__ import annotations

from .ast import BinOp, Call, Constraint, Expr, Model, Name, Neg, Number, Transpose, VectorLit

_PREC = {"+": 1, "-": 1, "*": 2, ".*": 2, "/": 2}
_ATOM = 4


def _number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, (Neg, Transpose)):
        return 3
    return _ATOM


def _atom(node: Expr) -> str:
    s = to_text(node)
    return s if _prec(node) == _ATOM else f"({s})"


def to_text(node: Expr) -> str:
    """Render an expression with the fewest parentheses that parse back to the same tree."""
    if isinstance(node, Number):
        return _number(node.value)
    if isinstance(node, VectorLit):
        return "[" + ", ".join(_number(v) for v in node.values) + "]"
    if isinstance(node, Name):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    if isinstance(node, Transpose):
        return _atom(node.operand) + "'"
    if isinstance(node, Neg):
        inner = node.operand
        # the grammar only allows '-' in front of an atom or a transposed atom
        if isinstance(inner, Transpose) and _prec(inner.operand) == _ATOM:
            return "-" + to_text(inner)
        return "-" + _atom(inner)
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left = to_text(node.left)
        if _prec(node.left) < p:
            left = f"({left})"
        right = to_text(node.right)
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def constraint_text(c: Constraint) -> str:
    lhs = to_text(c.lhs)
    # a leading '-' would otherwise continue the previous constraint's rhs
    if lhs.startswith("-"):
        lhs = f"({lhs})"
    return f"{lhs} {c.relation.value} {to_text(c.rhs)}"


def to_source(model: Model) -> str:
    lines = []
    if model.parameters:
        lines.append("parameters")
        lines += [f"  {d.kind.value} {d.name}" for d in model.parameters]
    lines.append("variables")
    lines += [f"  {d.kind.value} {d.name}" for d in model.variables]
    lines += ["min", "  " + to_text(model.objective)]
    if model.constraints:
        lines.append("st")
        lines += ["  " + constraint_text(c) for c in model.constraints]
    return "\n".join(lines) + "\n"
