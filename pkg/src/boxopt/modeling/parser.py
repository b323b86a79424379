"""Tokenizer and recursive-descent parser for model files.

Layout::

    parameters
      Matrix A
      Vector b
    variables
      Vector x
    min
      norm2(A*x-b)
    st
      sum(x) == 1
      x >= 0

Whitespace is insignificant and ``#`` starts a comment that runs to the end
of the line. Besides the usual operators, ``[1, 2, 3]`` writes a constant
column vector.
"""

from __future__ import annotations

import re
from typing import NamedTuple

from .ast import (
    FUNCTIONS,
    BinOp,
    Call,
    Constraint,
    Decl,
    DuplicateDeclarationError,
    Expr,
    Kind,
    Model,
    ModelSyntaxError,
    Name,
    Neg,
    Number,
    Pos,
    Relation,
    Role,
    Transpose,
    UndeclaredIdentifierError,
    VectorLit,
    children,
)

SECTIONS = ("parameters", "variables", "min", "st")
KINDS = tuple(k.value for k in Kind)
KEYWORDS = frozenset(SECTIONS + KINDS + FUNCTIONS)


class Token(NamedTuple):
    kind: str  # NUMBER, IDENT, OP or EOF
    text: str
    pos: Pos


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+(?:\.(?!\*)\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\.\*|==|<=|>=|[-+*/'()\[\],])
    """,
    re.VERBOSE,
)


def tokenize(src: str) -> list[Token]:
    tokens = []
    i = 0
    line, line_start = 1, 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        pos = Pos(line, i - line_start + 1)
        if m is None:
            raise ModelSyntaxError(f"unexpected character {src[i]!r}", pos)
        kind = m.lastgroup
        text = m.group()
        if kind == "number":
            tokens.append(Token("NUMBER", text, pos))
        elif kind == "ident":
            tokens.append(Token("IDENT", text, pos))
        elif kind == "op":
            tokens.append(Token("OP", text, pos))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = i + text.rfind("\n") + 1
        i = m.end()
    tokens.append(Token("EOF", "", Pos(line, i - line_start + 1)))
    return tokens


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "EOF" else repr(tok.text)


class _Parser:
    def __init__(self, src: str):
        self.tokens = tokenize(src)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.tok.kind in ("OP", "IDENT") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise ModelSyntaxError(f"expected {text!r}, found {_describe(self.tok)}", self.tok.pos)
        return self.advance()

    # sections

    def model(self) -> Model:
        params: tuple[Decl, ...] = ()
        if self.at("parameters"):
            self.advance()
            params = self.decls(Role.PARAMETER, "parameters")
        if not self.at("variables"):
            raise ModelSyntaxError(f"expected 'variables', found {_describe(self.tok)}", self.tok.pos)
        self.advance()
        variables = self.decls(Role.VARIABLE, "variables")
        self.expect("min")
        objective = self.expr()
        constraints: list[Constraint] = []
        if self.at("st"):
            self.advance()
            constraints.append(self.constraint())
            while self.tok.kind != "EOF" and not self.at_section():
                constraints.append(self.constraint())
        if self.at("min"):
            raise ModelSyntaxError("multiple objectives", self.tok.pos)
        if self.tok.kind != "EOF":
            if self.at_section():
                raise ModelSyntaxError(
                    f"section {self.tok.text!r} is repeated or out of order", self.tok.pos
                )
            raise ModelSyntaxError(f"unexpected {_describe(self.tok)}", self.tok.pos)
        return Model(params, variables, objective, tuple(constraints))

    def at_section(self) -> bool:
        return self.tok.kind == "IDENT" and self.tok.text in SECTIONS

    def decls(self, role: Role, section: str) -> tuple[Decl, ...]:
        out = []
        while self.tok.kind == "IDENT" and self.tok.text in KINDS:
            kind = Kind(self.advance().text)
            name = self.tok
            if name.kind != "IDENT" or name.text in KEYWORDS:
                raise ModelSyntaxError(f"expected a name after {kind.value}, found {_describe(name)}", name.pos)
            self.advance()
            out.append(Decl(kind, name.text, role, name.pos))
        if not out:
            raise ModelSyntaxError(f"'{section}' needs at least one declaration", self.tok.pos)
        return tuple(out)

    def constraint(self) -> Constraint:
        start = self.tok.pos
        lhs = self.expr()
        if not (self.tok.kind == "OP" and self.tok.text in ("==", "<=", ">=")):
            raise ModelSyntaxError(f"expected '==', '<=' or '>=', found {_describe(self.tok)}", self.tok.pos)
        rel = Relation(self.advance().text)
        rhs = self.expr()
        return Constraint(lhs, rel, rhs, start)

    # expressions

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "OP" and self.tok.text in ("+", "-"):
            op = self.advance()
            node = BinOp(op.text, node, self.term(), op.pos)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.tok.kind == "OP" and self.tok.text in ("*", ".*", "/"):
            op = self.advance()
            node = BinOp(op.text, node, self.factor(), op.pos)
        return node

    def factor(self) -> Expr:
        neg = None
        if self.at("-"):
            neg = self.advance()
        node = self.atom()
        if self.at("'"):
            node = Transpose(node, self.advance().pos)
        if neg is not None:
            node = Neg(node, neg.pos)
        return node

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "NUMBER":
            self.advance()
            return Number(float(tok.text), tok.pos)
        if tok.kind == "IDENT":
            if tok.text in FUNCTIONS:
                self.advance()
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg, tok.pos)
            if tok.text in KEYWORDS:
                raise ModelSyntaxError(f"unexpected keyword {tok.text!r}", tok.pos)
            self.advance()
            if self.at("("):
                raise ModelSyntaxError(
                    f"unknown function {tok.text!r}; expected one of {', '.join(FUNCTIONS)}", tok.pos
                )
            return Name(tok.text, tok.pos)
        if self.at("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if self.at("["):
            return self.vector_literal()
        raise ModelSyntaxError(f"expected an expression, found {_describe(tok)}", tok.pos)

    def vector_literal(self) -> VectorLit:
        start = self.advance().pos
        values = [self.signed_number()]
        while self.at(","):
            self.advance()
            values.append(self.signed_number())
        self.expect("]")
        return VectorLit(tuple(values), start)

    def signed_number(self) -> float:
        sign = 1.0
        if self.at("-"):
            self.advance()
            sign = -1.0
        tok = self.tok
        if tok.kind != "NUMBER":
            raise ModelSyntaxError(f"expected a number, found {_describe(tok)}", tok.pos)
        self.advance()
        return sign * float(tok.text)


def _check_names(model: Model) -> None:
    seen: dict[str, Decl] = {}
    for decl in model.parameters + model.variables:
        if decl.name in seen:
            raise DuplicateDeclarationError(
                f"{decl.name!r} is already declared at {seen[decl.name].pos}", decl.pos
            )
        seen[decl.name] = decl

    exprs = [model.objective]
    for c in model.constraints:
        exprs += [c.lhs, c.rhs]
    stack = list(reversed(exprs))
    while stack:
        node = stack.pop()
        if isinstance(node, Name) and node.name not in seen:
            raise UndeclaredIdentifierError(node.name, node.pos)
        stack.extend(reversed(children(node)))


def parse(src: str) -> Model:
    """Parse model text. Raises a :class:`ModelError` subclass with the offending position."""
    model = _Parser(src).model()
    _check_names(model)
    return model
