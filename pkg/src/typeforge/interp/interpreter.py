"""SPMD execution of a checked program on the fabric.

Every virtual process walks the same statements. Assignments follow the
owner-computes rule: a value that lives on one process is computed and
stored by that process, while replicated scalars are updated everywhere.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from ..distarray import DistributedArray, GridSpec, block_copy, create_array
from ..errors import Aborted, DeadlockDetected, MeshamError, RuntimeFault
from ..fabric import Fabric
from ..frontend.nodes import (
    Assign,
    BinOp,
    Block,
    Break,
    Call,
    ExprStmt,
    For,
    If,
    LValue,
    Neg,
    Num,
    Ref,
    RetypeStmt,
    SyncStmt,
    TypedAssign,
    VarDecl,
)
from ..typesys.checker import TypedAst
from ..typesys.library import ELEMENT_BYTES, CommMode, Placement, ResolvedAttributes
from . import builtins
from .result import RunResult
from .values import arith, compare, convert
from .vectorize import try_vectorize

ZERO = {"Double": 0.0, "Int": 0, "Bool": False, "Char": "\0"}
LOCAL_DTYPES = {"Double": np.float64, "Int": np.int64, "Bool": np.bool_, "Char": np.dtype("<U1")}


# -- storage ---------------------------------------------------------------


@dataclass
class LocalScalar:
    value: Any


@dataclass
class RemoteScalar:
    """A scalar with a single copy in ``owner``'s window."""

    owner: int
    slot: tuple


@dataclass
class LocalArray:
    data: np.ndarray


@dataclass
class Binding:
    attrs: ResolvedAttributes
    storage: Any


class _Break(Exception):
    pass


@dataclass
class RunOptions:
    procs: int = 1
    seed: int = 0
    free_running: bool = False
    bc: Optional[Mapping[str, float]] = None
    vectorize: bool = True
    debug_versions: bool = False
    trace: bool = False
    fuzz: bool = False
    max_quantum: int = 3


@dataclass
class _Shared:
    """State visible to every context: the fabric and collectively created objects."""

    fabric: Fabric
    options: RunOptions
    bc: dict
    instances: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    residue_calls: int = 0
    converged: bool = False
    norm_b_zero: bool = False


class Process:
    """One virtual process executing the program."""

    def __init__(self, pid: int, shared: _Shared, typed: TypedAst):
        self.pid = pid
        self.shared = shared
        self.fabric = shared.fabric
        self.typed = typed
        self.frames: list[dict[str, Binding]] = [{}]
        self.decl_counts: dict[int, int] = {}
        self.sync_counts: dict[int, int] = {}
        self.norm_b: dict[int, float] = {}
        self.async_residuals: dict[int, builtins.AsyncResidual] = {}

    # -- environment -------------------------------------------------------

    def lookup(self, name: str) -> Binding:
        for frame in reversed(self.frames):
            if name in frame:
                return frame[name]
        raise KeyError(name)  # ruled out by the checker

    def run(self) -> dict[str, Binding]:
        for s in self.typed.ast.statements:
            self.exec(s)
        return self.frames[0]

    def run_block(self, stmts, frame: Optional[dict] = None) -> None:
        self.frames.append(frame if frame is not None else {})
        try:
            for s in stmts:
                self.exec(s)
        finally:
            self.frames.pop()

    # -- statements --------------------------------------------------------

    def exec(self, s) -> None:
        try:
            getattr(self, "exec_" + type(s).__name__)(s)
        except (_Break, RuntimeFault, Aborted, DeadlockDetected):
            raise
        except (MeshamError, ZeroDivisionError, OverflowError) as exc:
            raise RuntimeFault(self.pid, s.loc, exc) from exc

    def exec_Block(self, s: Block) -> None:
        self.run_block(s.stmts)

    def _shared_instance(self, s, create, prepare=None):
        n = self.decl_counts.get(id(s), 0)
        self.decl_counts[id(s)] = n + 1
        key = (id(s), n)
        with self.fabric.lock:
            found = self.shared.instances.get(key)
        if found is not None:
            return found
        # prepare may talk to the fabric, so it runs outside the lock
        extra = () if prepare is None else (prepare(),)
        with self.fabric.lock:
            if key not in self.shared.instances:
                self.shared.instances[key] = create(f"{s.name}@{s.loc.line}.{n}", *extra)
            return self.shared.instances[key]

    def exec_VarDecl(self, s: VarDecl) -> None:
        attrs = self.typed.decl_attrs[id(s)]
        opts = self.shared.options
        if attrs.is_array:
            if attrs.placement is Placement.REPLICATED:
                storage = LocalArray(np.zeros(attrs.shape, LOCAL_DTYPES[attrs.element]))
            else:
                owner = attrs.owner if attrs.placement is Placement.ON_PROCESS else None

                def make(name):
                    arr = create_array(GridSpec.from_attrs(attrs), attrs.element, self.fabric, name=name,
                                       readonly=attrs.readonly, owner=owner, debug_versions=opts.debug_versions)
                    self.shared.arrays[s.name] = arr
                    return arr

                storage = self._shared_instance(s, make)
            self.frames[-1][s.name] = Binding(attrs, storage)
            return
        if attrs.placement is Placement.ON_PROCESS:
            owner = attrs.owner
            self.fabric.check_pid(owner)

            def initial():
                return ZERO[attrs.element] if s.init is None else convert(attrs.element, self.eval(s.init))

            def make(name, value):
                self.fabric.register(owner, (name,), value, kind=attrs.element, readonly=attrs.readonly)
                return RemoteScalar(owner, (name,))

            # the slot is created holding its initial value, so no process can
            # read it before the initializer has run
            storage = self._shared_instance(s, make, initial)
            self.frames[-1][s.name] = Binding(attrs, storage)
            return
        value = ZERO[attrs.element] if s.init is None else convert(attrs.element, self.eval(s.init))
        self.frames[-1][s.name] = Binding(attrs, LocalScalar(value))

    def exec_Assign(self, s: Assign) -> None:
        b = self.lookup(s.target.base)
        self.assign(s.target, b, b.attrs, s.value, writable=False)

    def exec_TypedAssign(self, s: TypedAssign) -> None:
        b = self.lookup(s.target.base)
        attrs = self.typed.assign_attrs[id(s)]
        writable = not attrs.readonly
        if attrs.comm_mode is CommMode.CHANNEL:
            src, dst = attrs.channel
            nbytes = ELEMENT_BYTES[attrs.element]
            if self.pid == src:
                self.fabric.channel_transfer(self.pid, src, dst, convert(attrs.element, self.eval(s.value)), nbytes)
            elif self.pid == dst:
                value = self.fabric.channel_transfer(self.pid, src, dst)
                self.store(s.target, b, [], value, writable, owner_check=False)
            else:
                self.fabric.check_pid(src)
                self.fabric.check_pid(dst)
            return
        self.assign(s.target, b, attrs, s.value, writable=writable)

    def exec_RetypeStmt(self, s: RetypeStmt) -> None:
        b = self.lookup(s.name)
        self.frames[-1][s.name] = Binding(self.typed.retype_attrs[id(s)], b.storage)

    def exec_For(self, s: For) -> None:
        start, stop = self.eval(s.start), self.eval(s.stop)
        if self.shared.options.vectorize and try_vectorize(self, s, start, stop):
            return
        try:
            for v in range(start, stop):
                self.run_block(s.body.stmts, {s.var: Binding(_INT, LocalScalar(v))})
        except _Break:
            pass

    def exec_If(self, s: If) -> None:
        if self.eval(s.cond):
            self.run_block(s.then.stmts)
        elif s.orelse is not None:
            self.run_block(s.orelse.stmts)

    def exec_Break(self, s: Break) -> None:
        if self.pid == 0:
            self.shared.converged = True
        raise _Break()

    def exec_SyncStmt(self, s: SyncStmt) -> None:
        b = self.lookup(s.name)
        arr = b.storage
        if not isinstance(arr, DistributedArray) or not arr.mode.is_halo:
            return
        n = self.sync_counts.get(id(arr), 0) + 1
        self.sync_counts[id(arr)] = n
        arr.halo_exchange(self.pid, n)
        if not arr.mode.is_async:
            self.fabric.barrier(self.pid)

    def exec_ExprStmt(self, s: ExprStmt) -> None:
        self.eval(s.expr)

    # -- assignment --------------------------------------------------------

    def assign(self, lv: LValue, b: Binding, attrs: ResolvedAttributes, value_expr, writable: bool) -> None:
        st = b.storage
        if not lv.indices and attrs.is_array:
            self.assign_array(st, self.eval_ref(value_expr.target), writable or not attrs.readonly)
            return
        indices = [self.eval(i) for i in lv.indices]
        if isinstance(st, DistributedArray):
            owner, _ = st.owner_of(indices)
        elif isinstance(st, RemoteScalar):
            owner = st.owner
        else:
            owner = self.pid
        if owner != self.pid:
            return
        value = convert(attrs.element, self.eval(value_expr))
        self.store(lv, b, indices, value, writable or not attrs.readonly)

    def store(self, lv: LValue, b: Binding, indices, value, writable: bool, owner_check: bool = True) -> None:
        st = b.storage
        value = convert(b.attrs.element, value)
        if isinstance(st, LocalScalar):
            st.value = value
        elif isinstance(st, RemoteScalar):
            self.fabric.one_sided_put(self.pid, st.owner, st.slot, value, writable=writable)
        elif isinstance(st, LocalArray):
            st.data[tuple(self._bounded(st.data.shape, indices))] = value
        else:
            st.write(self.pid, indices, value, writable=writable)

    def _bounded(self, shape, indices):
        from ..errors import OutOfBounds

        if any(not 0 <= i < n for i, n in zip(indices, shape)):
            raise OutOfBounds(f"index {list(indices)} is outside an array of shape {list(shape)}")
        return indices

    def assign_array(self, dst, src, writable: bool) -> None:
        if isinstance(dst, DistributedArray) and isinstance(src, DistributedArray):
            barrier = dst.mode is CommMode.ONE_SIDED or src.mode is CommMode.ONE_SIDED
            if barrier:
                self.fabric.barrier(self.pid)
            block_copy(dst, src, self.pid, writable=writable)
            if barrier:
                self.fabric.barrier(self.pid)
        elif isinstance(dst, DistributedArray):
            dst._writable(writable)
            for blk in dst.blocks_owned(self.pid):
                lo, hi = dst.boxes[blk]
                dst.local_block(self.pid, blk)[...] = src.data[tuple(slice(l, h) for l, h in zip(lo, hi))]
        elif isinstance(src, DistributedArray):
            dst.data[...] = src.read_region(self.pid, (0,) * src.spec.rank, src.spec.global_shape)
        else:
            dst.data[...] = src.data

    # -- expressions -------------------------------------------------------

    def eval(self, e):
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Ref):
            return self.eval_ref(e.target)
        if isinstance(e, BinOp):
            left, right = self.eval(e.left), self.eval(e.right)
            if e.op in ("+", "-", "*", "/"):
                return arith(e.op, left, right)
            return compare(e.op, left, right)
        if isinstance(e, Neg):
            return -self.eval(e.operand)
        if isinstance(e, Call):
            return self.call(e)
        raise TypeError(f"cannot evaluate {e!r}")

    def eval_ref(self, lv: LValue):
        b = self.lookup(lv.base)
        st = b.storage
        if lv.prop is not None:
            p = self.eval(lv.indices[0])
            self.fabric.check_pid(p)
            lo, hi = st.local_bounds(p, len(lv.indices) - 1)
            return lo if lv.prop == "low" else hi
        if not lv.indices:
            if isinstance(st, LocalScalar):
                return st.value
            if isinstance(st, RemoteScalar):
                if st.owner == self.pid:
                    return self.fabric.local_slot(st.owner, st.slot).value
                return self.fabric.one_sided_get(self.pid, st.owner, st.slot)
            return st
        indices = [self.eval(i) for i in lv.indices]
        if isinstance(st, LocalArray):
            v = st.data[tuple(self._bounded(st.data.shape, indices))]
            return convert(b.attrs.element, v)
        return st.read(self.pid, indices)

    def call(self, e: Call):
        if e.name == "pid":
            return self.pid
        arr = self.eval(e.args[0])
        if e.name == "zeroGrid":
            builtins.zero_grid(arr, self.pid)
            return None
        if e.name == "fillBoundaryConditions":
            norm_b = builtins.fill_boundary(arr, self.pid, self.shared.bc)
            if norm_b == 0.0:
                # relative residual is undefined; fall back to the absolute one
                self.shared.norm_b_zero = True
                norm_b = 1.0
            self.norm_b[id(arr)] = norm_b
            return norm_b
        if e.name == "computeResidue":
            return self.compute_residue(arr)
        raise TypeError(f"unknown builtin {e.name}")

    def compute_residue(self, arr: DistributedArray) -> float:
        local = builtins.local_residual_sq(arr, self.pid)
        shared = self.shared
        if self.pid == 0:
            shared.residue_calls += 1
        if arr.mode.is_async:
            q = self.async_residuals.get(id(arr))
            if q is None:
                # without halo faces nothing can be stale, so every value is exact
                persistence = builtins.ASYNC_PERSISTENCE if arr.halos else 1
                q = self.async_residuals[id(arr)] = builtins.AsyncResidual(builtins.ASYNC_WINDOW, persistence)
            total = q.post_and_take(arr, self.pid, local)
            if total is None:
                return math.inf
        else:
            total = arr.fabric.reduce_sum(self.pid, local)
        norm_r = math.sqrt(total)
        if self.pid == 0:
            shared.history.append((shared.residue_calls - 1, norm_r / self.norm_b.get(id(arr), 1.0)))
        return norm_r


_INT = ResolvedAttributes(element="Int")


def run_program(typed: TypedAst, procs: int = 1, seed: int = 0, *, free_running: bool = False,
                bc: Optional[Mapping[str, float]] = None, vectorize: bool = True, debug_versions: bool = False,
                trace: bool = False, fuzz: bool = False, max_quantum: int = 3) -> RunResult:
    """Run ``typed`` on ``procs`` virtual processes and collect the outcome.

    Raises ``DeadlockDetected`` or ``RuntimeFault`` when the run fails.
    """
    options = RunOptions(procs, seed, free_running, bc, vectorize, debug_versions, trace, fuzz, max_quantum)
    fabric = Fabric(procs, seed, free_running=free_running, max_quantum=max_quantum, trace=trace, fuzz=fuzz)
    shared = _Shared(fabric, options, builtins.normalize_bc(bc))
    processes = [Process(p, shared, typed) for p in range(procs)]
    start = time.perf_counter()
    frames = fabric.run(lambda p: processes[p].run())
    wall = time.perf_counter() - start
    iterations = max(shared.residue_calls - (1 if shared.converged else 0), 0)
    return RunResult(
        procs=procs,
        iterations=iterations,
        residual_history=list(shared.history),
        converged=shared.converged,
        metrics=fabric.metrics.snapshot(),
        wall_time=wall,
        norm_b_zero_fallback=shared.norm_b_zero,
        arrays=dict(shared.arrays),
        finals=[_final_values(fabric, f) for f in frames],
        trace=fabric.metrics.trace_lines() if trace else [],
    )


def _final_values(fabric: Fabric, frame: dict[str, Binding]) -> dict[str, Any]:
    out = {}
    for name, b in frame.items():
        st = b.storage
        if isinstance(st, LocalScalar):
            out[name] = st.value
        elif isinstance(st, RemoteScalar):
            out[name] = fabric.local_slot(st.owner, st.slot).value
        elif isinstance(st, LocalArray):
            out[name] = st.data.copy()
        else:
            out[name] = st.gather_global()
    return out
