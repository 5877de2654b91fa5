"""Numerical kernels behind the Jacobi builtins.

All of them work on the calling process's own block; neighbour values are
read through the array, so they cost whatever the array's mode dictates.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Mapping, Optional

import numpy as np

from ..distarray import DistributedArray
from ..fabric import NOT_READY

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")
DEFAULT_BC = {"x-": 1.0}

# outstanding non-blocking reductions per process, and how many consecutive
# completed values must agree before an async residual is believed
ASYNC_WINDOW = 4
ASYNC_PERSISTENCE = 10


def normalize_bc(bc: Optional[Mapping[str, float]]) -> dict[str, float]:
    bc = dict(DEFAULT_BC if bc is None else bc)
    unknown = set(bc) - set(FACES)
    if unknown:
        raise ValueError(f"unknown boundary faces: {sorted(unknown)}")
    return {face: float(bc.get(face, 0.0)) for face in FACES}


def _face(face: str) -> tuple[int, int]:
    return "xyz".index(face[0]), -1 if face[1] == "-" else 1


def interior_box(a: DistributedArray, pid: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    bounds = [a.local_bounds(pid, d) for d in range(a.spec.rank)]
    return tuple(lo for lo, _ in bounds), tuple(hi for _, hi in bounds)


def zero_grid(a: DistributedArray, pid: int) -> None:
    a.fill_local(pid, 0)


def fill_boundary(a: DistributedArray, pid: int, bc: Mapping[str, float]) -> float:
    """Set the global boundary cells owned by ``pid`` and return ``norm_b``.

    Faces are applied in ``FACES`` order, so a later face overwrites the
    edges it shares with an earlier one. ``norm_b`` is the 2-norm of the
    right-hand side the boundary induces on the interior, reduced over all
    processes.
    """
    bc = normalize_bc(bc)
    shape = a.spec.global_shape
    for b in a.blocks_owned(pid):
        lo, hi = a.boxes[b]
        block = a.local_block(pid, b)
        for face in FACES:
            d, side = _face(face)
            g = 0 if side < 0 else shape[d] - 1
            if lo[d] <= g < hi[d]:
                sl = [slice(None)] * a.spec.rank
                sl[d] = g - lo[d]
                block[tuple(sl)] = bc[face]
    local = 0.0
    if all(n >= 3 for n in shape):
        lo, hi = interior_box(a, pid)
        if all(l < h for l, h in zip(lo, hi)):
            rhs = np.zeros(tuple(h - l for l, h in zip(lo, hi)))
            for face in FACES:
                d, side = _face(face)
                g = 1 if side < 0 else shape[d] - 2
                if lo[d] <= g < hi[d]:
                    sl = [slice(None)] * a.spec.rank
                    sl[d] = g - lo[d]
                    rhs[tuple(sl)] += bc[face]
            local = float(np.sum(rhs * rhs))
    return math.sqrt(a.fabric.reduce_sum(pid, local))


def local_residual_sq(a: DistributedArray, pid: int) -> float:
    """Sum over ``pid``'s interior cells of r^2, r = (six neighbours) - 6u."""
    lo, hi = interior_box(a, pid)
    if any(l >= h for l, h in zip(lo, hi)):
        return 0.0
    u = a.read_region(pid, lo, hi)
    total = None
    for d in range(a.spec.rank):
        for side in (1, -1):
            slo = tuple(l + side if e == d else l for e, l in enumerate(lo))
            shi = tuple(h + side if e == d else h for e, h in enumerate(hi))
            part = a.read_region(pid, slo, shi)
            total = part if total is None else total + part
    r = total - 6.0 * u
    return float(np.sum(r * r))


def jacobi_step(data: DistributedArray, new_data: DistributedArray, pid: int) -> None:
    """``new_data`` = mean of the six neighbours of ``data`` on ``pid``'s interior cells."""
    lo, hi = interior_box(data, pid)
    if any(l >= h for l, h in zip(lo, hi)):
        return
    total = None
    for d in range(data.spec.rank):
        for side in (1, -1):
            slo = tuple(l + side if e == d else l for e, l in enumerate(lo))
            shi = tuple(h + side if e == d else h for e, h in enumerate(hi))
            part = data.read_region(pid, slo, shi)
            total = part if total is None else total + part
    new_data.write_region(pid, lo, hi, total * 1.0 / 6.0)


class AsyncResidual:
    """Per-process queue of non-blocking residual reductions.

    Every call posts one reduction and collects all that have completed.
    Local residuals in async modes are computed against possibly stale
    halos, so a single small value is not trusted: the returned figure is
    the largest of the last ``persistence`` completed values, and never
    grows again once it has dropped. Completed values reach every process
    in the same order, so all processes cross a threshold at the same
    reduction.

    At most ``window`` reductions may be outstanding; a process that would
    exceed it waits for its oldest one. This bounds how far any process can
    run ahead of the slowest.
    """

    def __init__(self, window: int = 4, persistence: int = 1):
        self.window = window
        self.recent: deque[float] = deque(maxlen=max(persistence, 1))
        self.pending: list = []
        self.best: Optional[float] = None

    def _take(self, value: float) -> None:
        self.recent.append(value)
        if len(self.recent) == self.recent.maxlen:
            worst = max(self.recent)
            self.best = worst if self.best is None else min(self.best, worst)

    def post_and_take(self, a: DistributedArray, pid: int, local: float) -> Optional[float]:
        fabric = a.fabric
        self.pending.append(fabric.reduce_sum(pid, local, blocking=False))
        while self.pending and fabric.poll(self.pending[0]) is not NOT_READY:
            self._take(self.pending.pop(0).value)
        while len(self.pending) > self.window:
            self._take(fabric.wait(self.pending.pop(0)))
        return self.best
