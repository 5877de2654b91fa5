"""Scalar arithmetic with the language's numeric rules.

Int op Int stays Int, with division truncating toward zero; any Double
operand makes the operation floating point.
"""

from __future__ import annotations


def int_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("integer division by zero")
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def arith(op: str, a, b):
    if isinstance(a, int) and isinstance(b, int):
        if op == "/":
            return int_div(a, b)
    elif op == "/" and b == 0:
        raise ZeroDivisionError("floating division by zero")
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    raise ValueError(f"unknown operator {op}")


def compare(op: str, a, b) -> bool:
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    if op == "<=":
        return a <= b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    raise ValueError(f"unknown comparison {op}")


def convert(kind: str, value):
    """Store ``value`` into a variable of element ``kind``."""
    if kind == "Double":
        return float(value)
    if kind == "Int":
        return int(value)
    if kind == "Bool":
        return bool(value)
    return value
