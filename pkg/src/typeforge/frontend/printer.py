from __future__ import annotations

from .nodes import (
    Assign,
    Ast,
    BinOp,
    Block,
    Break,
    Call,
    ExprStmt,
    For,
    Ident,
    If,
    LValue,
    Neg,
    Num,
    Ref,
    RetypeStmt,
    SyncStmt,
    TypeChainExpr,
    TypedAssign,
    VarDecl,
)

INDENT = "    "

_PRECEDENCE = {"<": 1, ">": 1, "<=": 1, ">=": 1, "==": 1, "!=": 1, "+": 2, "-": 2, "*": 3, "/": 3}


def format_chain(chain: TypeChainExpr) -> str:
    parts = []
    for link in chain.links:
        if link.args:
            parts.append(f"{link.name}[{', '.join(_format_arg(a) for a in link.args)}]")
        else:
            parts.append(link.name)
    return " :: ".join(parts)


def _format_arg(arg) -> str:
    if isinstance(arg, int):
        return str(arg)
    if isinstance(arg, Ident):
        return arg.name
    return format_chain(arg)


def format_number(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def format_expr(e, parent: int = 0, right: bool = False) -> str:
    if isinstance(e, Num):
        return format_number(e.value)
    if isinstance(e, Ref):
        return format_lvalue(e.target)
    if isinstance(e, Call):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Neg):
        return "-" + format_expr(e.operand, 4)
    if isinstance(e, BinOp):
        prec = _PRECEDENCE[e.op]
        # comparisons are non-associative, so both operands bind tighter
        text = f"{format_expr(e.left, prec + (prec == 1))} {e.op} {format_expr(e.right, prec, True)}"
        if prec < parent or (prec == parent and right):
            return f"({text})"
        return text
    raise TypeError(f"not an expression: {e!r}")


def format_lvalue(lv: LValue) -> str:
    text = lv.base + "".join(f"[{format_expr(i)}]" for i in lv.indices)
    if lv.prop:
        text += "." + lv.prop
    return text


def _lines(stmt, depth: int) -> list[str]:
    pad = INDENT * depth
    if isinstance(stmt, VarDecl):
        text = f"var {stmt.name}"
        if stmt.chain is not None:
            text += f" : {format_chain(stmt.chain)}"
        if stmt.init is not None:
            text += f" := {format_expr(stmt.init)}"
        return [pad + text + ";"]
    if isinstance(stmt, Assign):
        return [f"{pad}{format_lvalue(stmt.target)} := {format_expr(stmt.value)};"]
    if isinstance(stmt, TypedAssign):
        return [f"{pad}({format_lvalue(stmt.target)} :: {format_chain(stmt.chain)}) := {format_expr(stmt.value)};"]
    if isinstance(stmt, RetypeStmt):
        return [f"{pad}{stmt.name} : {stmt.name} :: {format_chain(stmt.chain)};"]
    if isinstance(stmt, SyncStmt):
        return [f"{pad}sync {stmt.name};"]
    if isinstance(stmt, Break):
        return [pad + "break;"]
    if isinstance(stmt, ExprStmt):
        return [f"{pad}{format_expr(stmt.expr)};"]
    if isinstance(stmt, Block):
        return [pad + "{", *_body(stmt, depth + 1), pad + "}"]
    if isinstance(stmt, For):
        head = f"{pad}for {stmt.var} from {format_expr(stmt.start)} to {format_expr(stmt.stop)} {{"
        return [head, *_body(stmt.body, depth + 1), pad + "}"]
    if isinstance(stmt, If):
        out = [f"{pad}if ({format_expr(stmt.cond)}) {{", *_body(stmt.then, depth + 1)]
        if stmt.orelse is not None:
            out += [pad + "} else {", *_body(stmt.orelse, depth + 1)]
        return out + [pad + "}"]
    raise TypeError(f"not a statement: {stmt!r}")


def _body(block: Block, depth: int) -> list[str]:
    out: list[str] = []
    for s in block.stmts:
        out.extend(_lines(s, depth))
    return out


def pretty_print(ast: Ast) -> str:
    """Canonical source text for ``ast``; reparses to an equal tree."""
    lines: list[str] = []
    for stmt in ast.statements:
        lines.extend(_lines(stmt, 0))
    return "\n".join(lines) + ("\n" if lines else "")
