"""Type library, chain coercion and resolution, and the program checker."""

from .checker import BUILTINS, Diagnostic, TypedAst, typecheck
from .env import TypeEnvironment, VarInfo, with_scope
from .library import (
    ELEMENT_BYTES,
    ELEMENT_KINDS,
    CommMode,
    Mutability,
    Placement,
    ResolvedAttributes,
    TypeChain,
    TypeLink,
    build_chain,
    coerce,
    parse_chain,
    resolve,
)

__all__ = [
    "BUILTINS", "Diagnostic", "TypedAst", "typecheck",
    "TypeEnvironment", "VarInfo", "with_scope",
    "ELEMENT_BYTES", "ELEMENT_KINDS", "CommMode", "Mutability", "Placement", "ResolvedAttributes",
    "TypeChain", "TypeLink", "build_chain", "coerce", "parse_chain", "resolve",
]
