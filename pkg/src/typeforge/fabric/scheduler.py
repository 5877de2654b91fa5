"""Execution contexts for virtual processes.

Each virtual process runs in its own thread. In deterministic mode a single
token is passed between contexts: only the holder runs, and it gives the
token up at fabric calls once its seeded quantum is spent, so a seed fixes
the whole interleaving. In free-running mode all contexts run at once and
the seed only drives optional yield injection.

Outside ``Fabric.run`` there are no contexts; the calling thread drives the
fabric directly and any wait that cannot be satisfied immediately is a
deadlock.
"""

from __future__ import annotations

import random
import threading
import time
from typing import Callable, Optional

from ..errors import Aborted, DeadlockDetected

READY, BLOCKED, DONE = "ready", "blocked", "done"


class Scheduler:
    def __init__(self, nprocs: int, seed: int = 0, *, free_running: bool = False,
                 max_quantum: int = 3, yield_probability: float = 0.25):
        self.nprocs = nprocs
        self.seed = seed
        self.free_running = free_running
        self.max_quantum = max(1, max_quantum)
        self.yield_probability = yield_probability
        self.lock = threading.RLock()
        self._wake = [threading.Condition(self.lock) for _ in range(nprocs)]
        self._changed = threading.Condition(self.lock)
        self.active = False
        self.error: Optional[BaseException] = None
        self._state = [READY] * nprocs
        self._waits: list[Optional[tuple[Callable[[], bool], str]]] = [None] * nprocs
        self._current = 0
        self._budget = 0
        self._rng = random.Random(seed)
        self._thread_rngs = [random.Random(seed * 7919 + p) for p in range(nprocs)]
        self.switches = 0

    # -- lifecycle (driven by Fabric.run) ----------------------------------

    def activate(self) -> None:
        with self.lock:
            self.active = True
            self.error = None
            self._state = [READY] * self.nprocs
            self._waits = [None] * self.nprocs
            self._current = 0
            self._budget = self._quantum()

    def deactivate(self) -> None:
        with self.lock:
            self.active = False

    def enter(self, pid: int) -> None:
        if self.free_running:
            return
        with self.lock:
            self._await_token(pid)

    def finish(self, pid: int) -> None:
        with self.lock:
            self._state[pid] = DONE
            self._waits[pid] = None
            if self.free_running:
                self._check_stuck()
                self._changed.notify_all()
                return
            if self._current != pid:
                return
            nxt = self._pick(pid)
            if nxt is None:
                self._check_stuck()
                return
            self._hand_to(nxt)

    def abort(self, exc: BaseException) -> None:
        with self.lock:
            if self.error is None:
                self.error = exc
            for c in self._wake:
                c.notify_all()
            self._changed.notify_all()

    # -- used by fabric operations -----------------------------------------

    def checkpoint(self, pid: int) -> None:
        """Cooperative yield point; every fabric call passes through here."""
        if not self.active:
            return
        if self.free_running:
            if self.error is not None:
                raise Aborted(str(self.error))
            if self._thread_rngs[pid].random() < self.yield_probability:
                time.sleep(0)
            return
        with self.lock:
            if self.error is not None:
                raise Aborted(str(self.error))
            self._budget -= 1
            if self._budget > 0:
                return
            nxt = self._pick(pid)
            if nxt == pid or nxt is None:
                self._budget = self._quantum()
                return
            self._hand_to(nxt)
            self._await_token(pid)

    def notify(self) -> None:
        if self.active and self.free_running:
            with self.lock:
                self._changed.notify_all()

    def wait_for(self, pid: int, predicate: Callable[[], bool], reason: str) -> None:
        """Block context ``pid`` until ``predicate()`` holds (checked under the lock)."""
        with self.lock:
            if not self.active:
                if predicate():
                    return
                raise DeadlockDetected({pid: reason})
            while True:
                if self.error is not None:
                    raise Aborted(str(self.error))
                if predicate():
                    self._state[pid] = READY
                    self._waits[pid] = None
                    return
                self._state[pid] = BLOCKED
                self._waits[pid] = (predicate, reason)
                if self.free_running:
                    self._check_stuck()
                    if self.error is not None:
                        continue
                    self._changed.wait(timeout=0.05)
                    continue
                nxt = self._pick(pid)
                if nxt is None:
                    self._check_stuck()
                    continue
                self._hand_to(nxt)
                self._await_token(pid)

    # -- internals (lock held) ---------------------------------------------

    def _quantum(self) -> int:
        return self._rng.randint(1, self.max_quantum)

    def _runnable(self, p: int) -> bool:
        if self._state[p] == READY:
            return True
        if self._state[p] == BLOCKED:
            pred, _ = self._waits[p]
            return pred()
        return False

    def _pick(self, after: int) -> Optional[int]:
        n = self.nprocs
        for step in range(1, n + 1):
            p = (after + step) % n
            if self._runnable(p):
                return p
        return None

    def _hand_to(self, nxt: int) -> None:
        self.switches += 1
        self._current = nxt
        self._budget = self._quantum()
        self._wake[nxt].notify()

    def _await_token(self, pid: int) -> None:
        while self._current != pid and self.error is None:
            self._wake[pid].wait()
        if self.error is not None:
            raise Aborted(str(self.error))

    def _check_stuck(self) -> None:
        live = [p for p in range(self.nprocs) if self._state[p] != DONE]
        if not live or self.error is not None:
            return
        if any(self._runnable(p) for p in live):
            return
        blocked = {p: self._waits[p][1] for p in live if self._waits[p] is not None}
        self.error = DeadlockDetected(blocked)
        for c in self._wake:
            c.notify_all()
        self._changed.notify_all()
