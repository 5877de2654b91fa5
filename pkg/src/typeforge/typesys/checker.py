"""Whole-program static checking.

Every variable use must resolve to a chain known at compile time. Retypes
are lexically scoped; coercions inside a typed assignment only apply to
that one statement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..errors import CoercionError, TypeCheckFailed
from ..frontend.nodes import (
    Assign,
    Ast,
    BinOp,
    Block,
    Break,
    Call,
    ExprStmt,
    For,
    If,
    Loc,
    LValue,
    Neg,
    Num,
    Ref,
    RetypeStmt,
    SyncStmt,
    TypedAssign,
    VarDecl,
)
from .env import TypeEnvironment, VarInfo
from .library import (
    CommMode,
    Placement,
    ResolvedAttributes,
    TypeChain,
    TypeLink,
    build_chain,
    coerce,
    resolve,
)

ARITHMETIC = ("+", "-", "*", "/")
NUMERIC = ("Int", "Double")


@dataclass(frozen=True)
class Diagnostic:
    origin: str
    loc: Loc
    message: str
    severity: str = "error"
    name: Optional[str] = None

    def __str__(self) -> str:
        return f"{self.origin}:{self.loc.line}:{self.loc.col}: {self.severity}: {self.message}"


@dataclass
class TypedAst:
    ast: Ast
    origin: str = "<inline>"
    decl_attrs: dict[int, ResolvedAttributes] = field(default_factory=dict)
    assign_attrs: dict[int, ResolvedAttributes] = field(default_factory=dict)
    retype_attrs: dict[int, ResolvedAttributes] = field(default_factory=dict)
    warnings: list[Diagnostic] = field(default_factory=list)


@dataclass(frozen=True)
class _T:
    """Static type of an expression."""

    kind: str  # Int | Double | Bool | Char | Void | Array | Error
    attrs: Optional[ResolvedAttributes] = None


ERR = _T("Error")
INT, DOUBLE, BOOL, VOID = _T("Int"), _T("Double"), _T("Bool"), _T("Void")

# name -> (parameter kinds, result)
BUILTINS = {
    "pid": ((), INT),
    "zeroGrid": (("grid",), VOID),
    "fillBoundaryConditions": (("grid",), DOUBLE),
    "computeResidue": (("grid",), DOUBLE),
}


def _assignable(dst: str, src: _T) -> bool:
    if src.kind == "Error":
        return True
    if dst == "Double":
        return src.kind in NUMERIC
    return dst == src.kind


class _Checker:
    def __init__(self, origin: str, block_trace: Optional[list] = None):
        self.origin = origin
        self.env = TypeEnvironment()
        self.errors: list[Diagnostic] = []
        self.warnings: list[Diagnostic] = []
        self.loop_depth = 0
        self.tainted: set[str] = set()
        self.block_trace = block_trace
        self.out: TypedAst

    def error(self, loc: Loc, message: str, name: Optional[str] = None) -> None:
        self.errors.append(Diagnostic(self.origin, loc, message, "error", name))

    def warn(self, loc: Loc, message: str) -> None:
        self.warnings.append(Diagnostic(self.origin, loc, message, "warning"))

    # -- statements --------------------------------------------------------

    def run(self, ast: Ast) -> TypedAst:
        self.out = TypedAst(ast, self.origin)
        for stmt in ast.statements:
            self.stmt(stmt)
        self.out.warnings = sorted(self.warnings, key=lambda d: (d.loc.line, d.loc.col))
        return self.out

    def block(self, block: Block, loop_var: Optional[tuple[str, bool]] = None) -> None:
        before = self.env.snapshot() if self.block_trace is not None else None
        with self.env.scope():
            if loop_var is not None:
                name, tainted = loop_var
                self.env.declare(VarInfo(name, TypeChain((TypeLink("Int"),)), resolve(TypeChain((TypeLink("Int"),)))))
                self._taint(name, tainted)
            for s in block.stmts:
                self.stmt(s)
        if self.block_trace is not None:
            self.block_trace.append((block, before, self.env.snapshot()))

    def stmt(self, s) -> None:
        method = getattr(self, "stmt_" + type(s).__name__)
        method(s)

    def stmt_Block(self, s: Block) -> None:
        self.block(s)

    def stmt_VarDecl(self, s: VarDecl) -> None:
        if self.env.declared_here(s.name):
            self.error(s.loc, f"'{s.name}' is already declared in this scope", s.name)
        init_t = self.expr(s.init) if s.init is not None else None
        chain = attrs = None
        if s.chain is not None:
            try:
                chain = build_chain(s.chain, self.env.constants())
                attrs = resolve(chain)
            except CoercionError as exc:
                self.error(s.chain.loc, f"invalid type chain for '{s.name}': {exc}", s.name)
                self.env.declare(VarInfo(s.name, None, None))
                return
            if attrs.comm_mode is CommMode.CHANNEL:
                self.error(s.chain.loc, "channel is only allowed in a typed assignment, not a declaration", s.name)
            if init_t is not None:
                if attrs.is_array:
                    self.error(s.init.loc, f"array '{s.name}' cannot have an initial value", s.name)
                elif not _assignable(attrs.element, init_t):
                    self.error(s.init.loc, f"cannot initialise {attrs.element} '{s.name}' with {init_t.kind}", s.name)
        else:
            if init_t.kind not in ("Int", "Double", "Bool", "Error"):
                self.error(s.init.loc, f"cannot infer a type for '{s.name}' from {init_t.kind}", s.name)
                self.env.declare(VarInfo(s.name, None, None))
                return
            if init_t.kind == "Error":
                self.env.declare(VarInfo(s.name, None, None))
                return
            chain = TypeChain((TypeLink(init_t.kind),))
            attrs = resolve(chain)
        const_value = None
        if attrs.readonly and not attrs.is_array and s.init is not None:
            const_value = self.const_eval(s.init)
            if attrs.element == "Double" and const_value is not None:
                const_value = float(const_value)
        self.out.decl_attrs[id(s)] = attrs
        self.env.declare(VarInfo(s.name, chain, attrs, const_value))
        self._taint(s.name, s.init is not None and self.tainted_expr(s.init))

    def _target(self, lv: LValue, attrs: ResolvedAttributes) -> Optional[str]:
        """Element kind written through ``lv``; 'Array' for whole-array targets."""
        if lv.prop is not None:
            self.error(lv.loc, f"cannot assign to '.{lv.prop}'", lv.base)
            return None
        for idx in lv.indices:
            self._index(idx)
        if not lv.indices:
            return "Array" if attrs.is_array else attrs.element
        if not attrs.is_array:
            self.error(lv.loc, f"cannot index scalar '{lv.base}'", lv.base)
            return None
        if len(lv.indices) != len(attrs.shape):
            self.error(lv.loc, f"'{lv.base}' has {len(attrs.shape)} dimensions but {len(lv.indices)} indices were given", lv.base)
            return None
        return attrs.element

    def _write(self, lv: LValue, attrs: ResolvedAttributes, value, loc: Loc) -> None:
        if attrs.readonly:
            self.error(loc, f"cannot write to read-only variable '{lv.base}'", lv.base)
        kind = self._target(lv, attrs)
        vt = self.expr(value)
        if kind is None:
            return
        if kind == "Array":
            if vt.kind == "Error":
                return
            if vt.kind != "Array" or vt.attrs.element != attrs.element or vt.attrs.shape != attrs.shape:
                self.error(value.loc, f"'{lv.base}' can only be assigned an array of the same element type and shape", lv.base)
        elif not _assignable(kind, vt):
            self.error(value.loc, f"cannot assign {vt.kind} to {kind} '{lv.base}'", lv.base)
        if not lv.indices:
            self._taint(lv.base, self.tainted_expr(value))

    def stmt_Assign(self, s: Assign) -> None:
        info = self.lookup(s.target.base, s.target.loc)
        if info is None or info.attrs is None:
            self.expr(s.value)
            return
        self._write(s.target, info.attrs, s.value, s.loc)

    def _coerced(self, info: VarInfo, chain_expr, loc: Loc, what: str):
        try:
            addition = build_chain(chain_expr, self.env.constants())
            chain = coerce(info.chain, addition)
            attrs = resolve(chain)
        except CoercionError as exc:
            self.error(loc, f"invalid coercion of '{info.name}': {exc}", info.name)
            return None, None
        if attrs.storage_key() != info.attrs.storage_key():
            self.error(loc, f"{what} cannot change how '{info.name}' is stored", info.name)
            return None, None
        return chain, attrs

    def stmt_TypedAssign(self, s: TypedAssign) -> None:
        info = self.lookup(s.target.base, s.target.loc)
        if info is None or info.attrs is None:
            self.expr(s.value)
            return
        chain, attrs = self._coerced(info, s.chain, s.chain.loc, "a typed assignment")
        if attrs is None:
            self.expr(s.value)
            return
        if attrs.comm_mode is CommMode.CHANNEL and (s.target.indices or attrs.is_array):
            self.error(s.loc, "channel transfers apply to scalar variables", s.target.base)
        self.out.assign_attrs[id(s)] = attrs
        self._write(s.target, attrs, s.value, s.loc)

    def stmt_RetypeStmt(self, s: RetypeStmt) -> None:
        info = self.lookup(s.name, s.loc)
        if info is None or info.attrs is None:
            return
        chain, attrs = self._coerced(info, s.chain, s.chain.loc, "a retype")
        if attrs is None:
            return
        if attrs.comm_mode is CommMode.CHANNEL:
            self.error(s.chain.loc, "channel is only allowed in a typed assignment", s.name)
            return
        self.out.retype_attrs[id(s)] = attrs
        self.env.retype(s.name, chain, attrs)

    def stmt_For(self, s: For) -> None:
        for bound in (s.start, s.stop):
            t = self.expr(bound)
            if t.kind not in ("Int", "Error"):
                self.error(bound.loc, f"loop bounds must be Int, got {t.kind}")
        tainted = self.tainted_expr(s.start) or self.tainted_expr(s.stop)
        self.loop_depth += 1
        self.block(s.body, loop_var=(s.var, tainted))
        self.loop_depth -= 1

    def stmt_If(self, s: If) -> None:
        t = self.expr(s.cond)
        if t.kind not in ("Bool", "Error"):
            self.error(s.cond.loc, f"condition must be Bool, got {t.kind}")
        branches = [s.then] + ([s.orelse] if s.orelse is not None else [])
        if any(isinstance(x, Break) for b in branches for x in b.stmts) and self.tainted_expr(s.cond):
            self.warn(s.cond.loc, "break condition may differ between processes; every process must leave the loop together")
        for b in branches:
            self.block(b)

    def stmt_SyncStmt(self, s: SyncStmt) -> None:
        self.lookup(s.name, s.loc)

    def stmt_Break(self, s: Break) -> None:
        if self.loop_depth == 0:
            self.error(s.loc, "break outside a loop")

    def stmt_ExprStmt(self, s: ExprStmt) -> None:
        self.expr(s.expr)

    # -- expressions -------------------------------------------------------

    def lookup(self, name: str, loc: Loc) -> Optional[VarInfo]:
        info = self.env.lookup(name)
        if info is None:
            self.error(loc, f"use of undeclared variable '{name}'", name)
        return info

    def _index(self, idx) -> None:
        t = self.expr(idx)
        if t.kind not in ("Int", "Error"):
            self.error(idx.loc, f"array index must be Int, got {t.kind}")

    def expr(self, e) -> _T:
        if isinstance(e, Num):
            return DOUBLE if isinstance(e.value, float) else INT
        if isinstance(e, Ref):
            return self.ref(e.target)
        if isinstance(e, Neg):
            t = self.expr(e.operand)
            if t.kind not in NUMERIC + ("Error",):
                self.error(e.loc, f"cannot negate {t.kind}")
                return ERR
            return t
        if isinstance(e, BinOp):
            lt, rt = self.expr(e.left), self.expr(e.right)
            if ERR in (lt, rt):
                return ERR
            if e.op in ARITHMETIC:
                if lt.kind not in NUMERIC or rt.kind not in NUMERIC:
                    self.error(e.loc, f"operator '{e.op}' needs numeric operands, got {lt.kind} and {rt.kind}")
                    return ERR
                return DOUBLE if "Double" in (lt.kind, rt.kind) else INT
            if lt.kind in NUMERIC and rt.kind in NUMERIC:
                return BOOL
            if e.op in ("==", "!=") and lt.kind == rt.kind and lt.kind in ("Bool", "Char"):
                return BOOL
            self.error(e.loc, f"cannot compare {lt.kind} with {rt.kind}")
            return ERR
        if isinstance(e, Call):
            return self.call(e)
        raise TypeError(f"unknown expression {e!r}")

    def call(self, e: Call) -> _T:
        if e.name not in BUILTINS:
            self.error(e.loc, f"unknown function '{e.name}'", e.name)
            for a in e.args:
                self.expr(a)
            return ERR
        params, result = BUILTINS[e.name]
        if len(e.args) != len(params):
            self.error(e.loc, f"{e.name} takes {len(params)} argument(s), got {len(e.args)}", e.name)
            return result
        for arg in e.args:
            t = self.expr(arg)
            if t.kind == "Error":
                continue
            a = t.attrs
            if t.kind != "Array" or a.placement is not Placement.DISTRIBUTED or len(a.shape) != 3 or a.element != "Double":
                self.error(arg.loc, f"{e.name} needs a distributed 3-dimensional Double array", e.name)
        return result

    def ref(self, lv: LValue) -> _T:
        info = self.lookup(lv.base, lv.loc)
        for idx in lv.indices:
            self._index(idx)
        if info is None or info.attrs is None:
            return ERR
        a = info.attrs
        if lv.prop is not None:
            if a.placement is not Placement.DISTRIBUTED:
                self.error(lv.loc, f"'.{lv.prop}' needs a distributed array, '{lv.base}' is not one", lv.base)
                return ERR
            if not 1 <= len(lv.indices) <= len(a.shape):
                self.error(lv.loc, f"'.{lv.prop}' needs between 1 and {len(a.shape)} indices (process id first)", lv.base)
                return ERR
            return INT
        if not lv.indices:
            return _T("Array", a) if a.is_array else _T(a.element, a)
        if not a.is_array:
            self.error(lv.loc, f"cannot index scalar '{lv.base}'", lv.base)
            return ERR
        if len(lv.indices) != len(a.shape):
            self.error(lv.loc, f"'{lv.base}' has {len(a.shape)} dimensions but {len(lv.indices)} indices were given", lv.base)
            return ERR
        return _T(a.element, a)

    # -- helpers -----------------------------------------------------------

    def const_eval(self, e):
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Neg):
            v = self.const_eval(e.operand)
            return None if v is None else -v
        if isinstance(e, Ref) and not e.target.indices and e.target.prop is None:
            info = self.env.lookup(e.target.base)
            return info.const_value if info is not None else None
        if isinstance(e, BinOp) and e.op in ARITHMETIC:
            lv, rv = self.const_eval(e.left), self.const_eval(e.right)
            if lv is None or rv is None:
                return None
            from ..interp.values import arith

            try:
                return arith(e.op, lv, rv)
            except ZeroDivisionError:
                return None
        return None

    def _taint(self, name: str, tainted: bool) -> None:
        if tainted:
            self.tainted.add(name)
        else:
            self.tainted.discard(name)

    def tainted_expr(self, e) -> bool:
        """True when ``e`` may take different values on different processes."""
        if isinstance(e, Num):
            return False
        if isinstance(e, Call):
            return e.name == "pid" or any(self.tainted_expr(a) for a in e.args)
        if isinstance(e, Ref):
            lv = e.target
            if lv.prop is not None:
                return self.tainted_expr(lv.indices[0]) if lv.indices else False
            if lv.indices:
                return True
            return lv.base in self.tainted
        if isinstance(e, Neg):
            return self.tainted_expr(e.operand)
        if isinstance(e, BinOp):
            return self.tainted_expr(e.left) or self.tainted_expr(e.right)
        return False


def typecheck(ast: Ast, origin: str = "<inline>", block_trace: Optional[list] = None) -> TypedAst:
    """Check ``ast``; raise ``TypeCheckFailed`` listing every error by location."""
    checker = _Checker(origin, block_trace)
    typed = checker.run(ast)
    if checker.errors:
        raise TypeCheckFailed(sorted(checker.errors, key=lambda d: (d.loc.line, d.loc.col)))
    return typed
