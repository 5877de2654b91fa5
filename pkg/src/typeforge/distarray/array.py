"""Distributed arrays over the fabric.

Each block lives in its owner's window. Owners touch their own blocks
directly; everything else goes through the fabric. Halo caches are private
to the consuming process and only change during an exchange.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union

import numpy as np

from ..errors import (
    MultipleBlocksOwned,
    NoBlockOwned,
    NoHalo,
    OutOfBounds,
    ReadOnlyError,
    SpecMismatch,
)
from ..fabric import Fabric
from ..typesys.library import ELEMENT_BYTES, CommMode
from .grid import GridSpec

DTYPES = {"Double": np.float64, "Int": np.int64, "Bool": np.bool_, "Char": np.dtype("<U1")}

Box = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass
class FaceBuffer:
    """A face slot in the consumer's window."""

    version: int
    data: np.ndarray
    complete: bool = True
    versions: Optional[np.ndarray] = None  # per element, racy mode only


@dataclass
class Halo:
    """The ghost region of block ``consumer`` on side ``side`` of dimension ``dim``.

    Its cells are owned by block ``producer``; ``lo``/``hi`` are global
    coordinates of the region.
    """

    consumer: int
    producer: int
    dim: int
    side: int
    lo: tuple[int, ...]
    hi: tuple[int, ...]
    cache: np.ndarray
    version: int = -1
    elem_versions: Optional[np.ndarray] = None

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.consumer, self.dim, self.side)

    def contains(self, index) -> bool:
        return all(l <= i < h for i, l, h in zip(index, self.lo, self.hi))


@dataclass
class Violation:
    face: tuple[int, int, int]
    iteration: int
    version: int
    detail: str


def _intersect(a_lo, a_hi, b_lo, b_hi):
    lo = tuple(max(x, y) for x, y in zip(a_lo, b_lo))
    hi = tuple(min(x, y) for x, y in zip(a_hi, b_hi))
    if any(l >= h for l, h in zip(lo, hi)):
        return None
    return lo, hi


def _slices(lo, hi, origin) -> tuple[slice, ...]:
    return tuple(slice(l - o, h - o) for l, h, o in zip(lo, hi, origin))


def _scalar(element: str, value):
    if element == "Double":
        return float(value)
    if element == "Int":
        return int(value)
    if element == "Bool":
        return bool(value)
    return str(value)


class DistributedArray:
    def __init__(self, spec: GridSpec, element: str, fabric: Fabric, *, name: str = "array",
                 readonly: bool = False, owner: Optional[int] = None, debug_versions: bool = False):
        self.spec = spec
        self.element = element
        self.fabric = fabric
        self.name = name
        self.readonly = readonly
        self.dtype = DTYPES[element]
        self.item_bytes = ELEMENT_BYTES[element]
        P = fabric.process_count
        if owner is not None:
            fabric.check_pid(owner)
        self.block_of = [owner if owner is not None else b % P for b in spec.all_blocks()]
        self.boxes = [spec.block_box(b) for b in spec.all_blocks()]
        for b, pid in enumerate(self.block_of):
            fabric.register(pid, self._key(b), np.zeros(spec.block_shape(b), self.dtype),
                            kind=element, readonly=readonly)
        self.halos: dict[tuple[int, int, int], Halo] = {}
        self.produces: list[list[Halo]] = [[] for _ in range(P)]
        self.consumes: list[list[Halo]] = [[] for _ in range(P)]
        self.debug_versions = debug_versions
        self.publications: dict[tuple[int, int, int], dict[int, np.ndarray]] = {}
        self.violations: list[Violation] = []
        self.checked_faces = 0
        if spec.halo_depth > 0:
            self._make_halos()

    # -- layout ------------------------------------------------------------

    def _key(self, b: int) -> tuple:
        return (self.name, "blk", b)

    def _face_key(self, h: Halo) -> tuple:
        return (self.name, "face") + h.key

    @property
    def mode(self) -> CommMode:
        return self.spec.mode

    def _make_halos(self) -> None:
        n = self.spec.halo_depth
        for c in self.spec.all_blocks():
            lo, hi = self.boxes[c]
            for d, side, p in self.spec.neighbours(c):
                hlo, hhi = list(lo), list(hi)
                if side > 0:
                    hlo[d], hhi[d] = hi[d], hi[d] + n
                else:
                    hlo[d], hhi[d] = lo[d] - n, lo[d]
                shape = tuple(h - l for l, h in zip(hlo, hhi))
                h = Halo(c, p, d, side, tuple(hlo), tuple(hhi), np.zeros(shape, self.dtype))
                self.halos[h.key] = h
                self.consumes[self.block_of[c]].append(h)
                self.produces[self.block_of[p]].append(h)
                consumer = self.block_of[c]
                if self.mode is CommMode.HALO_ASYNC:
                    bufs = [FaceBuffer(-1, np.zeros(shape, self.dtype)) for _ in range(2)]
                    self.fabric.register(consumer, self._face_key(h), bufs, kind=self.element)
                elif self.mode is CommMode.HALO_RACY:
                    h.elem_versions = np.full(shape, -1, dtype=np.int64)
                    buf = FaceBuffer(-1, np.zeros(shape, self.dtype), versions=np.full(shape, -1, dtype=np.int64))
                    self.fabric.register(consumer, self._face_key(h), buf, kind=self.element)
                if self.debug_versions:
                    self.publications[h.key] = {-1: np.zeros(shape, self.dtype)}

    def blocks_owned(self, pid: int) -> list[int]:
        return [b for b, p in enumerate(self.block_of) if p == pid]

    def _check(self, index) -> tuple[int, ...]:
        index = tuple(int(i) for i in index)
        if len(index) != self.spec.rank or any(not 0 <= i < n for i, n in zip(index, self.spec.global_shape)):
            raise OutOfBounds(f"index {list(index)} is outside {self.name} of shape {list(self.spec.global_shape)}")
        return index

    def owner_of(self, index) -> tuple[int, tuple[int, ...]]:
        """Owning pid and offset within the owning block."""
        index = self._check(index)
        b = self.spec.block_of_index(index)
        lo = self.boxes[b][0]
        return self.block_of[b], tuple(i - l for i, l in zip(index, lo))

    def only_block(self, pid: int) -> int:
        owned = self.blocks_owned(pid)
        if not owned:
            raise NoBlockOwned(f"process {pid} owns no block of {self.name}")
        if len(owned) > 1:
            raise MultipleBlocksOwned(f"process {pid} owns {len(owned)} blocks of {self.name}")
        return owned[0]

    def local_bounds(self, pid: int, dim: int) -> tuple[int, int]:
        """Interior range ``[low, high)`` of ``pid``'s block in ``dim``.

        Cells on the global boundary hold fixed values and are excluded.
        """
        if not 0 <= dim < self.spec.rank:
            raise OutOfBounds(f"{self.name} has no dimension {dim}")
        b = self.only_block(pid)
        lo, hi = self.boxes[b][0][dim], self.boxes[b][1][dim]
        return max(lo, 1), min(hi, self.spec.global_shape[dim] - 1)

    def local_block(self, pid: int, b: Optional[int] = None) -> np.ndarray:
        """The owner's own storage for block ``b`` (no communication)."""
        if b is None:
            b = self.only_block(pid)
        if self.block_of[b] != pid:
            raise ValueError(f"process {pid} does not own block {b} of {self.name}")
        return self.fabric.local_slot(pid, self._key(b)).value

    # -- element access ----------------------------------------------------

    def halo_lookup(self, reader: int, index) -> Optional[Halo]:
        for h in self.consumes[reader]:
            if h.contains(index):
                return h
        return None

    def read(self, reader: int, index):
        index = self._check(index)
        b = self.spec.block_of_index(index)
        owner, lo = self.block_of[b], self.boxes[b][0]
        off = tuple(i - l for i, l in zip(index, lo))
        if owner == reader:
            return _scalar(self.element, self.fabric.local_slot(owner, self._key(b)).value[off])
        h = self.halo_lookup(reader, index)
        if h is not None:
            return _scalar(self.element, h.cache[tuple(i - l for i, l in zip(index, h.lo))])
        return _scalar(self.element, self.fabric.one_sided_get(reader, owner, self._key(b), off))

    def _writable(self, writable: bool) -> None:
        if self.readonly and not writable:
            raise ReadOnlyError(f"{self.name} is read-only")

    def write(self, writer: int, index, value, *, writable: bool = False) -> None:
        self._writable(writable)
        index = self._check(index)
        b = self.spec.block_of_index(index)
        owner, lo = self.block_of[b], self.boxes[b][0]
        off = tuple(i - l for i, l in zip(index, lo))
        if owner == writer:
            self.fabric.local_slot(owner, self._key(b)).value[off] = value
        else:
            self.fabric.one_sided_put(writer, owner, self._key(b), value, off, writable=writable)

    def _check_box(self, lo, hi) -> None:
        for l, h, n in zip(lo, hi, self.spec.global_shape):
            if not 0 <= l <= h <= n:
                raise OutOfBounds(f"region {list(lo)}..{list(hi)} is outside {self.name}")

    def _blocks_meeting(self, lo, hi) -> Iterable[tuple[int, tuple, tuple]]:
        for b, (blo, bhi) in enumerate(self.boxes):
            part = _intersect(lo, hi, blo, bhi)
            if part is not None:
                yield b, part[0], part[1]

    def read_region(self, reader: int, lo, hi) -> np.ndarray:
        """Values of the global box ``[lo, hi)`` as seen by ``reader``.

        Routing per element matches ``read``: owned cells are local, cells in a
        halo come from the cache, the rest are one-sided gets (one per element).
        """
        lo, hi = tuple(lo), tuple(hi)
        self._check_box(lo, hi)
        out = np.empty(tuple(h - l for l, h in zip(lo, hi)), self.dtype)
        for b, ilo, ihi in self._blocks_meeting(lo, hi):
            owner, blo = self.block_of[b], self.boxes[b][0]
            dst, src = _slices(ilo, ihi, lo), _slices(ilo, ihi, blo)
            if owner == reader:
                out[dst] = self.fabric.local_slot(owner, self._key(b)).value[src]
                continue
            view = out[dst]
            covered = np.zeros(view.shape, dtype=bool)
            for h in self.consumes[reader]:
                if h.producer != b:
                    continue
                part = _intersect(ilo, ihi, h.lo, h.hi)
                if part is None:
                    continue
                view[_slices(*part, ilo)] = h.cache[_slices(*part, h.lo)]
                covered[_slices(*part, ilo)] = True
            if covered.all():
                continue
            if not covered.any():
                view[...] = self.fabric.one_sided_gather(reader, owner, self._key(b), src)
            else:
                miss = np.nonzero(~covered)
                idx = tuple(m + (l - bl) for m, l, bl in zip(miss, ilo, blo))
                view[~covered] = self.fabric.one_sided_gather(reader, owner, self._key(b), idx)
        return out

    def write_region(self, writer: int, lo, hi, values, *, writable: bool = False) -> None:
        self._writable(writable)
        lo, hi = tuple(lo), tuple(hi)
        self._check_box(lo, hi)
        values = np.broadcast_to(np.asarray(values, dtype=self.dtype), tuple(h - l for l, h in zip(lo, hi)))
        for b, ilo, ihi in self._blocks_meeting(lo, hi):
            owner, blo = self.block_of[b], self.boxes[b][0]
            part = values[_slices(ilo, ihi, lo)]
            src = _slices(ilo, ihi, blo)
            if owner == writer:
                self.fabric.local_slot(owner, self._key(b)).value[src] = part
            else:
                self.fabric.one_sided_put(writer, owner, self._key(b), np.array(part), src,
                                          writable=writable, elementwise=True)

    def owns_region(self, pid: int, lo, hi) -> bool:
        return all(self.block_of[b] == pid for b, _, _ in self._blocks_meeting(tuple(lo), tuple(hi)))

    def fill_local(self, pid: int, value) -> None:
        for b in self.blocks_owned(pid):
            self.local_block(pid, b)[...] = value

    # -- halo exchange -----------------------------------------------------

    def _face_data(self, h: Halo) -> np.ndarray:
        p = h.producer
        return np.array(self.local_block(self.block_of[p], p)[_slices(h.lo, h.hi, self.boxes[p][0])])

    def _tag(self, h: Halo, iteration: int) -> tuple:
        return ("halo", self.name, iteration) + h.key

    def halo_exchange(self, pid: int, iteration: int) -> None:
        """Refresh the halos of ``pid``'s blocks according to the array's mode."""
        if self.spec.halo_depth == 0:
            raise NoHalo(f"{self.name} has no halo")
        if self.mode is CommMode.HALO_SYNC or not self.mode.is_halo:
            self._exchange_sync(pid, iteration)
        else:
            for h in self.produces[pid]:
                self._publish(pid, h, iteration)
            for h in self.consumes[pid]:
                self._adopt(pid, h, iteration)

    def _exchange_sync(self, pid: int, iteration: int) -> None:
        f = self.fabric
        for h in self.produces[pid]:
            data = self._face_data(h)
            dst = self.block_of[h.consumer]
            if dst == pid:
                h.cache[...], h.version = data, iteration
            else:
                f.send(pid, dst, "halo_face", data, data.size * self.item_bytes, self._tag(h, iteration))
        for h in self.consumes[pid]:
            src = self.block_of[h.producer]
            if src == pid:
                continue
            msg = f.recv(pid, src, "halo_face", self._tag(h, iteration))
            h.cache[...], h.version = msg.payload, iteration

    def _chunks(self, size: int) -> list[np.ndarray]:
        if (self.fabric.free_running or self.fabric.fuzz) and size > 1:
            return np.array_split(np.arange(size), min(size, 4))
        return [np.arange(size)]

    def _publish(self, pid: int, h: Halo, iteration: int) -> None:
        data = self._face_data(h)
        flat = data.reshape(-1)
        if self.debug_versions:
            with self.fabric.lock:
                self.publications[h.key][iteration] = data.copy()
        chunks = self._chunks(flat.size)
        consumer = self.block_of[h.consumer]
        racy = self.mode is CommMode.HALO_RACY
        k = iteration % 2
        for n, ch in enumerate(chunks):
            last = n == len(chunks) - 1

            def write(slot, ch=ch, first=n == 0, last=last):
                if racy:
                    buf = slot.value
                    buf.data.reshape(-1)[ch] = flat[ch]
                    buf.versions.reshape(-1)[ch] = iteration
                    buf.version = max(buf.version, iteration)
                    return
                buf = slot.value[k]
                if first:
                    buf.version, buf.complete = iteration, False
                buf.data.reshape(-1)[ch] = flat[ch]
                if last:
                    buf.complete = True

            self.fabric.window_apply(pid, consumer, self._face_key(h), write, kind="halo_face" if last else None,
                                     nbytes=flat.size * self.item_bytes, tag=self._tag(h, iteration))

    def _adopt(self, pid: int, h: Halo, iteration: int) -> None:
        racy = self.mode is CommMode.HALO_RACY

        def take(slot):
            if racy:
                buf = slot.value
                mask = buf.versions >= h.elem_versions
                h.cache[mask] = buf.data[mask]
                h.elem_versions[mask] = buf.versions[mask]
                h.version = int(h.elem_versions.min())
                return
            best = None
            for buf in slot.value:
                if buf.complete and buf.version >= h.version:
                    if best is None or buf.version > best.version:
                        best = buf
            if best is not None:
                h.cache[...] = best.data
                h.version = best.version

        self.fabric.window_apply(pid, pid, self._face_key(h), take)
        with self.fabric.lock:
            # a producer that is ahead of us is not stale
            self.fabric.metrics.record_staleness(max(iteration - h.version, 0))
            if self.debug_versions:
                self._verify(h, iteration)

    def _verify(self, h: Halo, iteration: int) -> None:
        self.checked_faces += 1
        log = self.publications[h.key]
        versions = h.elem_versions if h.elem_versions is not None else np.full(h.cache.shape, h.version)
        for v in np.unique(versions):
            v = int(v)
            if v not in log:
                self.violations.append(Violation(h.key, iteration, v, "version was never published"))
                continue
            sel = versions == v
            if not np.array_equal(h.cache[sel], log[v][sel]):
                self.violations.append(Violation(h.key, iteration, v, "value differs from the published one"))

    # -- whole-array helpers -----------------------------------------------

    def gather_global(self) -> np.ndarray:
        """Assemble the global field straight from the windows (debugging, no messages)."""
        out = np.zeros(self.spec.global_shape, self.dtype)
        for b, (lo, hi) in enumerate(self.boxes):
            out[_slices(lo, hi, (0,) * self.spec.rank)] = self.fabric.local_slot(self.block_of[b], self._key(b)).value
        return out

    def dump_csv(self, out: Union[str, IO[str]]) -> None:
        """Write ``i,j,k,value`` lines for every cell in global index order."""
        field_ = self.gather_global()
        handle = open(out, "w", newline="") if isinstance(out, str) else out
        try:
            w = csv.writer(handle, lineterminator="\n")
            for index in itertools.product(*(range(n) for n in self.spec.global_shape)):
                w.writerow([*index, repr(_scalar(self.element, field_[index]))])
        finally:
            if isinstance(out, str):
                handle.close()


def create_array(spec: GridSpec, element: str, fabric: Fabric, **options) -> DistributedArray:
    """Allocate a zeroed distributed array; blocks go to pids cyclically (block ``b`` to ``b mod P``)."""
    return DistributedArray(spec, element, fabric, **options)


def block_copy(dst: DistributedArray, src: DistributedArray, pid: int, *, writable: bool = False) -> None:
    """Copy ``pid``'s blocks of ``src`` into ``dst``. Halos of ``dst`` are left alone."""
    if dst.spec != src.spec or dst.element != src.element or dst.block_of != src.block_of:
        raise SpecMismatch(f"cannot copy {src.name} into {dst.name}: distributions differ")
    dst._writable(writable)
    for b in src.blocks_owned(pid):
        dst.local_block(pid, b)[...] = src.local_block(pid, b)
