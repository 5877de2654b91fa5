"""The simulated interconnect.

Every inter-process communication in the system goes through a ``Fabric``:
one-sided window accesses, mailbox messages, blocking channels, reductions
and barriers. Window operations take the fabric lock, which makes each of
them linearizable per slot.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Optional

import numpy as np

from ..errors import (
    Aborted,
    DeadlockDetected,
    InvalidPid,
    MismatchedMode,
    ReadOnlySlot,
    SelfChannel,
    UnknownSlot,
)
from .metrics import MetricCounters
from .scheduler import Scheduler

VALUE_BYTES = {"Double": 8, "Int": 4, "Char": 1, "Bool": 1}


class _NotReady:
    def __repr__(self) -> str:
        return "NotReady"


NOT_READY = _NotReady()


@dataclass
class Slot:
    value: Any
    kind: str = "Double"
    readonly: bool = False

    @property
    def item_bytes(self) -> int:
        return VALUE_BYTES.get(self.kind, 8)


@dataclass
class Message:
    src: int
    dst: int
    kind: str
    tag: Hashable
    payload: Any
    nbytes: int
    delivered: bool = False


@dataclass
class ReduceHandle:
    pid: int
    instance: int
    mode: str
    local: float
    done: bool = False
    value: Optional[float] = None


def _tag_text(tag) -> str:
    if isinstance(tag, tuple):
        return ":".join(str(t) for t in tag).replace(" ", "")
    return str(tag).replace(" ", "")


def _count(value) -> int:
    return int(np.size(value)) if isinstance(value, np.ndarray) else 1


class Fabric:
    def __init__(self, nprocs: int, seed: int = 0, *, free_running: bool = False,
                 max_quantum: int = 3, trace: bool = False, fuzz: bool = False):
        if nprocs < 1:
            raise ValueError(f"a fabric needs at least one process, got {nprocs}")
        self.process_count = nprocs
        self.seed = seed
        self.free_running = free_running
        self.fuzz = fuzz
        self.sched = Scheduler(nprocs, seed, free_running=free_running, max_quantum=max_quantum)
        self.lock = self.sched.lock
        self.windows: list[dict[Hashable, Slot]] = [{} for _ in range(nprocs)]
        self.mailboxes: list[deque[Message]] = [deque() for _ in range(nprocs)]
        self.metrics = MetricCounters(nprocs)
        if trace:
            self.metrics.enable_log()
        self._reduce_seq = [0] * nprocs
        self._barrier_seq = [0] * nprocs
        self._pending: dict[tuple[int, int], ReduceHandle] = {}

    # -- helpers -----------------------------------------------------------

    def check_pid(self, pid: int) -> None:
        if not isinstance(pid, (int, np.integer)) or not 0 <= pid < self.process_count:
            raise InvalidPid(f"process id {pid} is outside 0..{self.process_count - 1}")

    def _slot(self, owner: int, slot: Hashable) -> Slot:
        try:
            return self.windows[owner][slot]
        except KeyError:
            raise UnknownSlot(f"slot {slot!r} is not registered on process {owner}") from None

    def checkpoint(self, pid: int) -> None:
        self.sched.checkpoint(pid)

    # -- the PGAS window ---------------------------------------------------

    def register(self, owner: int, slot: Hashable, value, *, kind: str = "Double", readonly: bool = False) -> Slot:
        self.check_pid(owner)
        with self.lock:
            s = Slot(value, kind, readonly)
            self.windows[owner][slot] = s
            return s

    def has_slot(self, owner: int, slot: Hashable) -> bool:
        return slot in self.windows[owner]

    def local_slot(self, owner: int, slot: Hashable) -> Slot:
        """Direct access by the owner to its own window (no communication)."""
        return self._slot(owner, slot)

    def one_sided_get(self, caller: int, owner: int, slot: Hashable, index=None):
        """Read a slot (or ``slot[index]``) from ``owner``'s window.

        Counts one message carrying the whole value unless ``caller == owner``.
        """
        self.check_pid(caller)
        self.check_pid(owner)
        self.checkpoint(caller)
        with self.lock:
            s = self._slot(owner, slot)
            value = s.value if index is None else s.value[index]
            if isinstance(value, np.ndarray):
                value = value.copy()
            if caller != owner:
                self.metrics.transfer("one_sided", owner, caller, _count(value) * s.item_bytes, _tag_text(("get",) + _label(slot)))
            return value

    def one_sided_gather(self, caller: int, owner: int, slot: Hashable, index) -> np.ndarray:
        """Element-wise remote reads: ``n`` elements cost ``n`` messages.

        All elements are read at one linearization point, which is equivalent
        to issuing the individual gets back to back.
        """
        self.check_pid(caller)
        self.check_pid(owner)
        self.checkpoint(caller)
        with self.lock:
            s = self._slot(owner, slot)
            values = np.array(s.value[index], copy=True)
            if caller != owner and values.size:
                self.metrics.transfer("one_sided", owner, caller, s.item_bytes, _tag_text(("get",) + _label(slot)), values.size)
            return values

    def one_sided_put(self, caller: int, owner: int, slot: Hashable, value, index=None, *,
                      writable: bool = False, kind: str = "one_sided", elementwise: bool = False) -> None:
        """Write ``value`` into ``owner``'s slot (or ``slot[index]``).

        ``writable=True`` is passed by callers whose access was retyped
        writable, which lifts a read-only registration for this one put.
        """
        self.check_pid(caller)
        self.check_pid(owner)
        self.checkpoint(caller)
        with self.lock:
            s = self._slot(owner, slot)
            if s.readonly and not writable:
                raise ReadOnlySlot(f"slot {slot!r} on process {owner} is read-only")
            if index is None:
                s.value = value.copy() if isinstance(value, np.ndarray) else value
            else:
                s.value[index] = value
            if caller != owner:
                n = _count(value)
                if elementwise and n > 1:
                    self.metrics.transfer(kind, caller, owner, s.item_bytes, _tag_text(("put",) + _label(slot)), n)
                else:
                    self.metrics.transfer(kind, caller, owner, n * s.item_bytes, _tag_text(("put",) + _label(slot)))
            self.sched.notify()

    def window_apply(self, caller: int, owner: int, slot: Hashable, fn: Callable[[Slot], Any], *,
                     kind: Optional[str] = None, nbytes: int = 0, tag: Hashable = "", count: int = 1):
        """Run ``fn(slot)`` atomically on ``owner``'s window.

        When ``kind`` is given and ``caller != owner`` the access is counted as
        ``count`` messages of ``nbytes`` each.
        """
        self.check_pid(caller)
        self.check_pid(owner)
        self.checkpoint(caller)
        with self.lock:
            result = fn(self._slot(owner, slot))
            if kind is not None and caller != owner and count:
                self.metrics.transfer(kind, caller, owner, nbytes, _tag_text(tag), count)
            self.sched.notify()
            return result

    # -- mailboxes ---------------------------------------------------------

    def send(self, src: int, dst: int, kind: str, payload, nbytes: int, tag: Hashable) -> Message:
        self.check_pid(src)
        self.check_pid(dst)
        self.checkpoint(src)
        with self.lock:
            msg = Message(src, dst, kind, tag, payload, nbytes)
            self.mailboxes[dst].append(msg)
            self.metrics.sent(kind, src, dst, nbytes, _tag_text(tag))
            self.sched.notify()
            return msg

    def _find(self, dst: int, src: int, kind: str, tag) -> Optional[Message]:
        for m in self.mailboxes[dst]:
            if m.src == src and m.kind == kind and (tag is None or m.tag == tag):
                return m
        return None

    def _take(self, dst: int, msg: Message) -> Message:
        self.mailboxes[dst].remove(msg)
        msg.delivered = True
        self.metrics.received(msg.kind, dst)
        self.sched.notify()
        return msg

    def try_recv(self, dst: int, src: int, kind: str, tag=None) -> Optional[Message]:
        self.checkpoint(dst)
        with self.lock:
            msg = self._find(dst, src, kind, tag)
            return self._take(dst, msg) if msg is not None else None

    def recv(self, dst: int, src: int, kind: str, tag=None) -> Message:
        """Blocking receive of the oldest matching message from ``src``."""
        self.check_pid(dst)
        self.check_pid(src)
        self.checkpoint(dst)
        with self.lock:
            self.sched.wait_for(dst, lambda: self._find(dst, src, kind, tag) is not None,
                                f"waiting for {kind} message from pid {src} (tag {_tag_text(tag)})")
            return self._take(dst, self._find(dst, src, kind, tag))

    # -- blocking channels -------------------------------------------------

    def channel_send(self, src: int, dst: int, value, nbytes: int = 8) -> None:
        if src == dst:
            raise SelfChannel(f"channel from process {src} to itself")
        msg = self.send(src, dst, "channel", value, nbytes, ("chan", src, dst))
        with self.lock:
            self.sched.wait_for(src, lambda: msg.delivered, f"channel send to pid {dst} not yet received")

    def channel_recv(self, dst: int, src: int):
        if src == dst:
            raise SelfChannel(f"channel from process {src} to itself")
        return self.recv(dst, src, "channel").payload

    def channel_transfer(self, caller: int, src: int, dst: int, value=None, nbytes: int = 8):
        """Rendezvous transfer; the source passes ``value``, the destination gets it back."""
        self.check_pid(src)
        self.check_pid(dst)
        if src == dst:
            raise SelfChannel(f"channel from process {src} to itself")
        if caller == src:
            self.channel_send(src, dst, value, nbytes)
            return value
        if caller == dst:
            return self.channel_recv(dst, src)
        raise ValueError(f"process {caller} is not an endpoint of channel {src}->{dst}")

    # -- reductions --------------------------------------------------------

    def reduce_sum(self, caller: int, local: float, *, blocking: bool = True):
        """Global sum: contributions gather at pid 0, which sums in pid order and broadcasts.

        Blocking mode returns the sum. Non-blocking mode returns a
        ``ReduceHandle`` to be passed to ``poll``.
        """
        self.check_pid(caller)
        mode = "blocking" if blocking else "nonblocking"
        with self.lock:
            n = self._reduce_seq[caller]
            self._reduce_seq[caller] += 1
        handle = ReduceHandle(caller, n, mode, float(local))
        if self.process_count == 1:
            handle.done, handle.value = True, float(local)
            return handle.value if blocking else handle
        if caller != 0:
            self.send(caller, 0, "reduction", (mode, float(local)), 8, ("reduce", n))
        if not blocking:
            return handle
        self.checkpoint(caller)
        with self.lock:
            self.sched.wait_for(caller, lambda: self._reduction_ready(handle),
                                f"reduction #{n} ({'gathering contributions' if caller == 0 else 'awaiting result'})")
            self._complete(handle)
        return handle.value

    def poll(self, handle: ReduceHandle):
        """Non-blocking progress on a reduction: its sum, or ``NOT_READY``."""
        if handle.done:
            return handle.value
        self.checkpoint(handle.pid)
        with self.lock:
            if not self._reduction_ready(handle):
                return NOT_READY
            self._complete(handle)
        return handle.value

    def wait(self, handle: ReduceHandle) -> float:
        """Block until a non-blocking reduction completes and return its sum."""
        if handle.done:
            return handle.value
        self.checkpoint(handle.pid)
        with self.lock:
            self.sched.wait_for(handle.pid, lambda: self._reduction_ready(handle),
                                f"waiting on non-blocking reduction #{handle.instance}")
            self._complete(handle)
        return handle.value

    def _reduction_ready(self, h: ReduceHandle) -> bool:
        if h.pid == 0:
            return all(self._find(0, p, "reduction", ("reduce", h.instance)) is not None
                       for p in range(1, self.process_count))
        return self._find(h.pid, 0, "reduction", ("result", h.instance)) is not None

    def _complete(self, h: ReduceHandle) -> None:
        if h.pid == 0:
            total = h.local
            for p in range(1, self.process_count):
                msg = self._take(0, self._find(0, p, "reduction", ("reduce", h.instance)))
                mode, value = msg.payload
                if mode != h.mode:
                    raise MismatchedMode(f"reduction #{h.instance}: pid 0 is {h.mode} but pid {p} is {mode}")
                total += value
            for p in range(1, self.process_count):
                self.mailboxes[p].append(Message(0, p, "reduction", ("result", h.instance), (h.mode, total), 8))
                self.metrics.sent("reduction", 0, p, 8, _tag_text(("result", h.instance)))
            self.sched.notify()
        else:
            msg = self._take(h.pid, self._find(h.pid, 0, "reduction", ("result", h.instance)))
            mode, total = msg.payload
            if mode != h.mode:
                raise MismatchedMode(f"reduction #{h.instance}: pid {h.pid} is {h.mode} but pid 0 is {mode}")
        h.done, h.value = True, total

    def barrier(self, caller: int) -> None:
        """No process returns until every process has entered (flat gather/release via pid 0)."""
        self.check_pid(caller)
        if self.process_count == 1:
            return
        with self.lock:
            n = self._barrier_seq[caller]
            self._barrier_seq[caller] += 1
        if caller != 0:
            self.send(caller, 0, "reduction", None, 0, ("barrier", n))
            self.recv(caller, 0, "reduction", ("release", n))
            return
        for p in range(1, self.process_count):
            self.recv(0, p, "reduction", ("barrier", n))
        for p in range(1, self.process_count):
            self.send(0, p, "reduction", None, 0, ("release", n))

    # -- running SPMD contexts ---------------------------------------------

    def run(self, fn: Callable[[int], Any]) -> list:
        """Run ``fn(pid)`` on every virtual process and return the results by pid.

        Raises ``DeadlockDetected`` when every context is blocked, or the
        first error raised by any context.
        """
        n = self.process_count
        results: list = [None] * n
        errors: list[Optional[BaseException]] = [None] * n
        order: list[int] = []
        sched = self.sched
        sched.activate()

        def body(pid: int):
            try:
                sched.enter(pid)
                results[pid] = fn(pid)
            except BaseException as exc:  # noqa: BLE001 - re-raised by the caller
                errors[pid] = exc
                if not isinstance(exc, Aborted):
                    with self.lock:
                        order.append(pid)
                    sched.abort(exc)
            finally:
                sched.finish(pid)

        threads = [threading.Thread(target=body, args=(p,), name=f"vproc-{p}", daemon=True) for p in range(n)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        sched.deactivate()
        if isinstance(sched.error, DeadlockDetected):
            raise sched.error
        if order:
            raise errors[order[0]]
        if sched.error is not None:
            raise sched.error
        return results

    def pending_messages(self) -> int:
        return sum(len(m) for m in self.mailboxes)


def _label(slot) -> tuple:
    if isinstance(slot, tuple):
        return tuple(str(s) for s in slot)
    return (str(slot),)


def spawn(nprocs: int, seed: int = 0, **options) -> Fabric:
    """A fabric of ``nprocs`` virtual processes with empty windows and zeroed metrics."""
    return Fabric(nprocs, seed, **options)
