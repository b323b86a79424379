"""Syntax tree for model files.

Nodes compare structurally; source positions are carried along for error
messages but ignored by ``==`` and ``hash``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Union


class Pos(NamedTuple):
    line: int
    col: int

    def __str__(self) -> str:
        return f"line {self.line}, column {self.col}"


NOWHERE = Pos(0, 0)


class ModelError(ValueError):
    """Base class for model-file errors that point at a source position."""

    def __init__(self, message: str, pos: Pos = NOWHERE):
        self.message = message
        self.pos = pos
        super().__init__(f"{pos}: {message}" if pos != NOWHERE else message)


class ModelSyntaxError(ModelError):
    pass


class DuplicateDeclarationError(ModelError):
    pass


class UndeclaredIdentifierError(ModelError):
    def __init__(self, name: str, pos: Pos):
        self.name = name
        super().__init__(f"undeclared identifier {name!r}", pos)


class Kind(str, Enum):
    MATRIX = "Matrix"
    VECTOR = "Vector"
    SCALAR = "Scalar"


class Role(str, Enum):
    PARAMETER = "parameter"
    VARIABLE = "variable"


class Relation(str, Enum):
    EQ = "=="
    LE = "<="
    GE = ">="


FUNCTIONS = ("norm2", "sum", "exp", "log", "log1p")


@dataclass(frozen=True)
class Number:
    value: float
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class VectorLit:
    values: tuple[float, ...]
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class Name:
    name: str
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class Transpose:
    operand: "Expr"
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * .* /
    left: "Expr"
    right: "Expr"
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


Expr = Union[Number, VectorLit, Name, Neg, Transpose, BinOp, Call]


@dataclass(frozen=True)
class Decl:
    kind: Kind
    name: str
    role: Role
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class Constraint:
    lhs: Expr
    relation: Relation
    rhs: Expr
    pos: Pos = field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class Model:
    parameters: tuple[Decl, ...]
    variables: tuple[Decl, ...]
    objective: Expr
    constraints: tuple[Constraint, ...] = ()

    @property
    def declarations(self) -> dict[str, Decl]:
        return {d.name: d for d in self.parameters + self.variables}


def children(node: Expr) -> tuple:
    if isinstance(node, (Neg, Transpose)):
        return (node.operand,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return (node.arg,)
    return ()


def names_in(node: Expr) -> set[str]:
    """Identifiers referenced anywhere below ``node``."""
    found: set[str] = set()
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Name):
            found.add(cur.name)
        stack.extend(children(cur))
    return found
