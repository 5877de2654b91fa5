"""AST node definitions.

Every node carries a ``loc`` that is excluded from equality, so two trees
parsed from differently formatted text compare equal when their structure
matches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class Loc:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NOWHERE = Loc(0, 0)


def _loc() -> Loc:
    return field(default=NOWHERE, compare=False, repr=False)


# -- type chains -----------------------------------------------------------


@dataclass
class Ident:
    """Bare identifier used as a type argument (``nx`` in ``array[Double, nx]``)."""

    name: str
    loc: Loc = _loc()


@dataclass
class TypeInstanceExpr:
    name: str
    args: list["TypeArg"] = field(default_factory=list)
    loc: Loc = _loc()


@dataclass
class TypeChainExpr:
    links: list[TypeInstanceExpr]
    loc: Loc = _loc()


TypeArg = Union[TypeChainExpr, int, Ident]


# -- expressions -----------------------------------------------------------


@dataclass
class Num:
    value: Union[int, float]
    loc: Loc = _loc()


@dataclass
class LValue:
    base: str
    indices: list["Expr"] = field(default_factory=list)
    prop: Optional[str] = None  # "low" | "high"
    loc: Loc = _loc()


@dataclass
class Ref:
    target: LValue
    loc: Loc = _loc()


@dataclass
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    loc: Loc = _loc()


@dataclass
class Neg:
    operand: "Expr"
    loc: Loc = _loc()


@dataclass
class Call:
    name: str
    args: list["Expr"] = field(default_factory=list)
    loc: Loc = _loc()


Expr = Union[Num, Ref, BinOp, Neg, Call]


# -- statements ------------------------------------------------------------


@dataclass
class Block:
    stmts: list["Stmt"] = field(default_factory=list)
    loc: Loc = _loc()


@dataclass
class VarDecl:
    name: str
    chain: Optional[TypeChainExpr] = None
    init: Optional[Expr] = None
    loc: Loc = _loc()


@dataclass
class Assign:
    target: LValue
    value: Expr
    loc: Loc = _loc()


@dataclass
class TypedAssign:
    target: LValue
    chain: TypeChainExpr
    value: Expr
    loc: Loc = _loc()


@dataclass
class RetypeStmt:
    """``a : a :: writable;`` -- ``chain`` holds only the appended links."""

    name: str
    chain: TypeChainExpr
    loc: Loc = _loc()


@dataclass
class For:
    var: str
    start: Expr
    stop: Expr
    body: Block
    loc: Loc = _loc()


@dataclass
class If:
    cond: Expr
    then: Block
    orelse: Optional[Block] = None
    loc: Loc = _loc()


@dataclass
class SyncStmt:
    name: str
    loc: Loc = _loc()


@dataclass
class Break:
    loc: Loc = _loc()


@dataclass
class ExprStmt:
    expr: Expr
    loc: Loc = _loc()


Stmt = Union[VarDecl, Assign, TypedAssign, RetypeStmt, For, If, SyncStmt, Break, ExprStmt, Block]


@dataclass
class Ast:
    statements: list[Stmt] = field(default_factory=list)


@dataclass(frozen=True)
class SourceProgram:
    text: str
    origin: str = "<inline>"

    @classmethod
    def from_path(cls, path) -> "SourceProgram":
        with open(path, encoding="utf-8") as fh:
            return cls(fh.read(), str(path))
