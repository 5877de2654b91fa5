"""Whole-nest execution of simple stencil loops.

A perfect nest of one to three ``for`` loops whose body is a single
``A[i][j][k] := rhs`` is run as array operations when doing so cannot be
told apart from running it cell by cell:

* the loop bounds do not depend on the nest's loop variables,
* every target cell belongs to the executing process,
* ``rhs`` only combines literals, replicated scalars, ``pid()`` and reads
  ``B[i+c][j+c][k+c]`` of Double arrays other than ``A``.

Element reads are routed exactly as the cell-by-cell path routes them, so
message counts agree. Anything else returns ``False`` and the caller falls
back to the scalar path.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..distarray import DistributedArray
from ..errors import MeshamError
from ..frontend.nodes import Assign, BinOp, Call, For, Neg, Num, Ref
from ..typesys.library import Placement
from .values import arith


class _Unsupported(Exception):
    pass


def _nest(s: For) -> tuple[list[For], Optional[Assign]]:
    loops = [s]
    body = s.body.stmts
    while len(body) == 1 and isinstance(body[0], For) and len(loops) < 3:
        loops.append(body[0])
        body = body[0].body.stmts
    if len(body) != 1 or not isinstance(body[0], Assign):
        return loops, None
    return loops, body[0]


def _loop_offset(e, var: str) -> Optional[int]:
    """``c`` when ``e`` is ``var``, ``var + c`` or ``var - c``."""
    if isinstance(e, Ref) and not e.target.indices and e.target.prop is None and e.target.base == var:
        return 0
    if isinstance(e, BinOp) and e.op in ("+", "-") and isinstance(e.right, Num) and isinstance(e.right.value, int):
        inner = _loop_offset(e.left, var)
        if inner is not None:
            return inner + (e.right.value if e.op == "+" else -e.right.value)
    return None


class _Nest:
    def __init__(self, proc, loops: list[For], assign: Assign):
        self.proc = proc
        self.loops = loops
        self.vars = [f.var for f in loops]
        self.assign = assign

    def scalar(self, name: str):
        if name in self.vars:
            raise _Unsupported()
        b = self.proc.lookup(name)
        if b.attrs.is_array or b.attrs.placement is not Placement.REPLICATED:
            raise _Unsupported()
        return b.storage.value

    def bound(self, e):
        """Evaluate a loop bound, refusing anything that involves the nest's variables."""
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Call) and e.name == "pid" and not e.args:
            return self.proc.pid
        if isinstance(e, Neg):
            return -self.bound(e.operand)
        if isinstance(e, BinOp) and e.op in ("+", "-", "*", "/"):
            return arith(e.op, self.bound(e.left), self.bound(e.right))
        if isinstance(e, Ref):
            lv = e.target
            if lv.prop is not None:
                # only the process id index matters; the rest merely select the dimension
                p = self.bound(lv.indices[0])
                arr = self.proc.lookup(lv.base).storage
                self.proc.fabric.check_pid(p)
                lo, hi = arr.local_bounds(p, len(lv.indices) - 1)
                return lo if lv.prop == "low" else hi
            if lv.indices:
                raise _Unsupported()
            return self.scalar(lv.base)
        raise _Unsupported()

    def reads(self, e, out: list) -> None:
        """Validate ``rhs`` and collect its array reads."""
        if isinstance(e, Num):
            return
        if isinstance(e, Call):
            if e.name != "pid" or e.args:
                raise _Unsupported()
            return
        if isinstance(e, Neg):
            self.reads(e.operand, out)
            return
        if isinstance(e, BinOp):
            if e.op not in ("+", "-", "*", "/"):
                raise _Unsupported()
            self.reads(e.left, out)
            self.reads(e.right, out)
            return
        if isinstance(e, Ref):
            lv = e.target
            if lv.prop is not None:
                raise _Unsupported()
            if not lv.indices:
                self.scalar(lv.base)
                return
            b = self.proc.lookup(lv.base)
            if not isinstance(b.storage, DistributedArray) or b.attrs.element != "Double":
                raise _Unsupported()
            if len(lv.indices) != len(self.vars):
                raise _Unsupported()
            offsets = [_loop_offset(i, v) for i, v in zip(lv.indices, self.vars)]
            if None in offsets:
                raise _Unsupported()
            out.append((e, b.storage, tuple(offsets)))
            return
        raise _Unsupported()

    def value(self, e, lo, hi, regions: dict):
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Call):
            return self.proc.pid
        if isinstance(e, Neg):
            return -self.value(e.operand, lo, hi, regions)
        if isinstance(e, BinOp):
            left = self.value(e.left, lo, hi, regions)
            right = self.value(e.right, lo, hi, regions)
            if isinstance(left, np.ndarray) or isinstance(right, np.ndarray):
                if e.op == "/" and np.any(np.asarray(right) == 0):
                    raise ZeroDivisionError("floating division by zero")
                return {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.true_divide}[e.op](left, right)
            return arith(e.op, left, right)
        lv = e.target
        if not lv.indices:
            return self.scalar(lv.base)
        return regions[id(e)]


def try_vectorize(proc, s: For, start, stop) -> bool:
    loops, assign = _nest(s)
    if assign is None:
        return False
    target = assign.target
    if target.prop is not None or len(target.indices) != len(loops):
        return False
    nest = _Nest(proc, loops, assign)
    if [_loop_offset(i, v) for i, v in zip(target.indices, nest.vars)] != [0] * len(loops):
        return False
    b = proc.lookup(target.base)
    arr = b.storage
    if not isinstance(arr, DistributedArray) or b.attrs.element != "Double" or b.attrs.readonly:
        return False
    try:
        bounds = [(start, stop)] + [(nest.bound(f.start), nest.bound(f.stop)) for f in loops[1:]]
        reads: list = []
        nest.reads(assign.value, reads)
    except (_Unsupported, MeshamError, ZeroDivisionError):
        # the cell-by-cell path reports real errors where they occur
        return False
    if len(set(nest.vars)) != len(nest.vars):
        return False
    if any(not isinstance(v, int) for pair in bounds for v in pair):
        return False
    if any(rd[1] is arr for rd in reads):
        return False
    lo = tuple(l for l, _ in bounds)
    hi = tuple(h for _, h in bounds)
    if any(h <= l for l, h in zip(lo, hi)):
        return True  # an empty nest does nothing
    if len(lo) != arr.spec.rank or not arr.owns_region(proc.pid, lo, hi):
        return False
    for _, src, off in reads:
        slo = [l + o for l, o in zip(lo, off)]
        shi = [h + o for h, o in zip(hi, off)]
        if any(l < 0 or h > n for l, h, n in zip(slo, shi, src.spec.global_shape)):
            return False
    regions = {}
    for e, src, off in reads:
        regions[id(e)] = src.read_region(proc.pid, [l + o for l, o in zip(lo, off)], [h + o for h, o in zip(hi, off)])
    result = nest.value(assign.value, lo, hi, regions)
    arr.write_region(proc.pid, lo, hi, np.asarray(result, dtype=np.float64))
    return True
