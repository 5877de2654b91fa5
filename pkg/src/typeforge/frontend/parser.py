"""Recursive-descent parser for the Mesham subset.

Grammar (``{}`` = repetition, ``[]`` = option)::

    program   := {stmt}
    stmt      := block [';'] | vardecl | retype | typedasgn | assign | for | if
               | 'break' ';' | 'sync' IDENT ';' | call ';'
    vardecl   := 'var' IDENT [':' chain] [':=' expr] ';'
    retype    := IDENT ':' IDENT '::' chain ';'          -- first link names the variable
    typedasgn := '(' lvalue '::' chain ')' ':=' expr ';'
    assign    := lvalue ':=' expr ';'
    for       := 'for' IDENT 'from' expr 'to' expr block [';']
    if        := 'if' expr body ['else' body]            -- body = block or one stmt
    chain     := link {'::' link}
    link      := IDENT ['[' arg {',' arg} ']']
    arg       := INT | chain
    expr      := sum [('<'|'>'|'<='|'>='|'=='|'!=') sum]
    sum       := term {('+'|'-') term}
    term      := unary {('*'|'/') unary}
    unary     := '-' unary | primary
    primary   := NUM | '(' expr ')' | IDENT '(' [expr {',' expr}] ')' | lvalue
    lvalue    := IDENT {'[' expr ']'} ['.' ('low'|'high')]
"""

from __future__ import annotations

from ..errors import ParseError
from .lexer import Token, tokenize
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
    Loc,
    LValue,
    Neg,
    Num,
    Ref,
    RetypeStmt,
    SourceProgram,
    SyncStmt,
    TypeChainExpr,
    TypedAssign,
    TypeInstanceExpr,
    VarDecl,
)

# Names the type library defines; a bare argument naming one of these is a
# one-link chain, any other bare name is an identifier (a compile-time constant).
TYPE_NAMES = frozenset(
    {
        "Int", "Double", "Char", "Bool",
        "array", "allocated", "single", "on", "evendist", "grid",
        "halo", "async", "racy", "channel", "const", "writable",
    }
)

COMPARISONS = ("<", ">", "<=", ">=", "==", "!=")
PROPERTIES = ("low", "high")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0
        self.open_braces: list[Token] = []
        # (opening brace, closing brace, token before the closing brace)
        self.brace_pairs: list[tuple[Token, Token, Token]] = []
        self.line_indent: dict[int, int] = {}
        for t in tokens:
            self.line_indent.setdefault(t.line, t.col)

    # -- token helpers -----------------------------------------------------

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind in ("op", "keyword") and t.text == text

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, text: str, what: str = "") -> Token:
        if not self.at(text):
            self.fail(f"expected {what or repr(text)}")
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.peek().kind != "ident":
            self.fail(f"expected {what}")
        return self.advance()

    def fail(self, message: str):
        t = self.peek()
        if t.kind == "eof":
            self._fail_at_eof(message)
        raise ParseError(message, t.line, t.col, t.text)

    def _fail_at_eof(self, message: str):
        if self.open_braces:
            # A '}' whose column disagrees with its opener's indentation most
            # likely closed the wrong block; the missing brace belongs before it.
            for opener, closer, before in self.brace_pairs:
                if self.line_indent.get(closer.line) == closer.col and closer.col != self.line_indent[opener.line]:
                    raise ParseError(
                        f"missing '}}' for block opened at line {opener.line}",
                        before.line, before.col, before.text,
                    )
            opener = self.open_braces[-1]
            message = f"unclosed '{{' opened at line {opener.line}"
        last = self.toks[-2] if len(self.toks) > 1 else self.toks[-1]
        raise ParseError(message + " (end of input)", last.line, last.col, last.text)

    @staticmethod
    def loc(t: Token) -> Loc:
        return Loc(t.line, t.col)

    # -- statements --------------------------------------------------------

    def program(self) -> Ast:
        stmts = []
        while self.peek().kind != "eof":
            if self.at("}"):
                self.fail("unbalanced '}'")
            stmts.append(self.statement())
        return Ast(stmts)

    def block(self) -> Block:
        opener = self.expect("{")
        self.open_braces.append(opener)
        stmts = []
        while not self.at("}"):
            if self.peek().kind == "eof":
                self.fail("expected '}'")
            stmts.append(self.statement())
        before = self.toks[self.pos - 1]
        closer = self.advance()
        self.open_braces.pop()
        self.brace_pairs.append((opener, closer, before))
        return Block(stmts, self.loc(opener))

    def _optional_semicolon(self):
        if self.at(";"):
            self.advance()

    def statement(self):
        t = self.peek()
        if self.at("{"):
            b = self.block()
            self._optional_semicolon()
            return b
        if t.kind == "keyword":
            if t.text == "var":
                return self.var_decl()
            if t.text == "for":
                return self.for_stmt()
            if t.text == "if":
                return self.if_stmt()
            if t.text == "break":
                self.advance()
                self.expect(";", "';' after break")
                return Break(self.loc(t))
            if t.text == "sync":
                self.advance()
                name = self.expect_ident("variable name after sync")
                self.expect(";", "';'")
                return SyncStmt(name.text, self.loc(t))
            self.fail("unexpected keyword")
        if self.at("("):
            return self.typed_assign()
        if t.kind == "ident":
            if self.at(":", 1):
                return self.retype()
            if self.at("(", 1):
                call = self.primary()
                self.expect(";", "';'")
                return ExprStmt(call, self.loc(t))
            target = self.lvalue()
            self.expect(":=", "':='")
            value = self.expr()
            self.expect(";", "';'")
            return Assign(target, value, self.loc(t))
        self.fail("expected a statement")

    def var_decl(self) -> VarDecl:
        start = self.advance()
        name = self.expect_ident("variable name")
        chain = init = None
        if self.at(":"):
            self.advance()
            chain = self.chain()
        if self.at(":="):
            self.advance()
            init = self.expr()
        if chain is None and init is None:
            self.fail("declaration needs a type or an initial value")
        self.expect(";", "';'")
        return VarDecl(name.text, chain, init, self.loc(start))

    def retype(self) -> RetypeStmt:
        name = self.advance()
        self.advance()  # ':'
        chain = self.chain()
        head = chain.links[0]
        if head.name != name.text or head.args:
            raise ParseError(
                f"retype must start with the variable itself ('{name.text} : {name.text} :: ...')",
                head.loc.line, head.loc.col, head.name,
            )
        if len(chain.links) < 2:
            self.fail("retype needs at least one type after '::'")
        self.expect(";", "';'")
        return RetypeStmt(name.text, TypeChainExpr(chain.links[1:], chain.links[1].loc), self.loc(name))

    def typed_assign(self) -> TypedAssign:
        start = self.advance()
        target = self.lvalue()
        self.expect("::", "'::' in typed assignment")
        chain = self.chain()
        self.expect(")", "')'")
        self.expect(":=", "':='")
        value = self.expr()
        self.expect(";", "';'")
        return TypedAssign(target, chain, value, self.loc(start))

    def for_stmt(self) -> For:
        start = self.advance()
        var = self.expect_ident("loop variable")
        self.expect("from", "'from'")
        lo = self.expr()
        self.expect("to", "'to'")
        hi = self.expr()
        if not self.at("{"):
            self.fail("expected '{' to open loop body")
        body = self.block()
        self._optional_semicolon()
        return For(var.text, lo, hi, body, self.loc(start))

    def _branch(self) -> tuple[Block, bool]:
        if self.at("{"):
            return self.block(), True
        stmt = self.statement()
        return Block([stmt], stmt.loc), False

    def if_stmt(self) -> If:
        start = self.advance()
        cond = self.expr()
        then, braced = self._branch()
        orelse = None
        if self.at("else"):
            self.advance()
            orelse, braced = self._branch()
        if braced:
            self._optional_semicolon()
        return If(cond, then, orelse, self.loc(start))

    # -- type chains -------------------------------------------------------

    def chain(self) -> TypeChainExpr:
        first = self.link()
        links = [first]
        while self.at("::"):
            self.advance()
            links.append(self.link())
        return TypeChainExpr(links, first.loc)

    def link(self) -> TypeInstanceExpr:
        t = self.peek()
        if t.kind != "ident":
            self.fail("malformed type chain: expected a type name")
        self.advance()
        args = []
        if self.at("["):
            self.advance()
            args.append(self.type_arg())
            while self.at(","):
                self.advance()
                args.append(self.type_arg())
            self.expect("]", "']' closing type arguments")
        return TypeInstanceExpr(t.text, args, self.loc(t))

    def type_arg(self):
        t = self.peek()
        if t.kind == "int":
            self.advance()
            return int(t.text)
        chain = self.chain()
        if len(chain.links) == 1 and not chain.links[0].args and chain.links[0].name not in TYPE_NAMES:
            return Ident(chain.links[0].name, chain.loc)
        return chain

    # -- expressions -------------------------------------------------------

    def expr(self):
        left = self.sum()
        t = self.peek()
        if t.kind == "op" and t.text in COMPARISONS:
            self.advance()
            right = self.sum()
            return BinOp(t.text, left, right, self.loc(t))
        return left

    def sum(self):
        left = self.term()
        while self.at("+") or self.at("-"):
            t = self.advance()
            left = BinOp(t.text, left, self.term(), self.loc(t))
        return left

    def term(self):
        left = self.unary()
        while self.at("*") or self.at("/"):
            t = self.advance()
            left = BinOp(t.text, left, self.unary(), self.loc(t))
        return left

    def unary(self):
        if self.at("-"):
            t = self.advance()
            return Neg(self.unary(), self.loc(t))
        return self.primary()

    def primary(self):
        t = self.peek()
        if t.kind == "int":
            self.advance()
            return Num(int(t.text), self.loc(t))
        if t.kind == "float":
            self.advance()
            return Num(float(t.text), self.loc(t))
        if self.at("("):
            self.advance()
            inner = self.expr()
            self.expect(")", "')'")
            return inner
        if t.kind == "ident":
            if self.at("(", 1):
                self.advance()
                self.advance()
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")", "')' closing call")
                return Call(t.text, args, self.loc(t))
            return Ref(self.lvalue(), self.loc(t))
        self.fail("expected an expression")

    def lvalue(self) -> LValue:
        name = self.expect_ident()
        indices = []
        while self.at("["):
            self.advance()
            indices.append(self.expr())
            self.expect("]", "']'")
        prop = None
        if self.at("."):
            self.advance()
            p = self.peek()
            if p.kind != "ident" or p.text not in PROPERTIES:
                self.fail("expected 'low' or 'high' after '.'")
            prop = self.advance().text
        return LValue(name.text, indices, prop, self.loc(name))


def parse(source) -> Ast:
    """Parse a ``SourceProgram`` (or plain text) into an ``Ast``."""
    text = source.text if isinstance(source, SourceProgram) else source
    return _Parser(tokenize(text)).program()
