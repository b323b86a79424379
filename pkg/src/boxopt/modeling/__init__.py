"""A small matrix modeling language compiled to constrained problems."""

from .ast import (
    BinOp,
    Call,
    Constraint,
    Decl,
    DuplicateDeclarationError,
    Kind,
    Model,
    ModelError,
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
)
from .compiler import (
    BindingError,
    CompiledModel,
    DomainError,
    compile_model,
    constraint_eval,
    eval_with_gradient,
)
from .parser import parse, tokenize
from .printer import to_source, to_text
from .shapes import ShapeEnv, ShapeError, shape_check

__all__ = [
    "BinOp", "BindingError", "Call", "CompiledModel", "Constraint", "Decl", "DomainError",
    "DuplicateDeclarationError", "Kind", "Model", "ModelError", "ModelSyntaxError", "Name", "Neg",
    "Number", "Pos", "Relation", "Role", "ShapeEnv", "ShapeError", "Transpose",
    "UndeclaredIdentifierError", "VectorLit", "compile_model", "constraint_eval",
    "eval_with_gradient", "parse", "shape_check", "to_source", "to_text", "tokenize",
]
