"""Lexer, parser and pretty printer for the Mesham subset."""

from .nodes import *  # noqa: F401,F403
from .nodes import Ast, SourceProgram
from .parser import TYPE_NAMES, parse
from .printer import format_chain, format_expr, pretty_print

__all__ = ["Ast", "SourceProgram", "TYPE_NAMES", "parse", "pretty_print", "format_chain", "format_expr"]
