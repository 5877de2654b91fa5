from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

KINDS = ("one_sided", "channel", "halo_face", "reduction")


@dataclass
class KindCounter:
    messages: int = 0
    bytes: int = 0
    sends: int = 0
    receives: int = 0


@dataclass
class MetricCounters:
    """Per-kind message and byte counts, per-process traffic and async staleness.

    All counters only ever grow during a run.
    """

    nprocs: int
    kinds: dict[str, KindCounter] = field(default_factory=lambda: {k: KindCounter() for k in KINDS})
    sends: list[int] = field(default_factory=list)
    receives: list[int] = field(default_factory=list)
    staleness: Counter = field(default_factory=Counter)
    log: Optional[list[tuple]] = None
    _seq: int = 0

    def __post_init__(self):
        self.sends = self.sends or [0] * self.nprocs
        self.receives = self.receives or [0] * self.nprocs

    def enable_log(self) -> None:
        if self.log is None:
            self.log = []

    def sent(self, kind: str, src: int, dst: int, nbytes: int, tag: str, count: int = 1) -> None:
        k = self.kinds[kind]
        k.messages += count
        k.bytes += nbytes * count
        k.sends += count
        self.sends[src] += count
        if self.log is not None:
            for _ in range(count):
                self._seq += 1
                self.log.append((self._seq, src, dst, kind, nbytes, tag))

    def received(self, kind: str, dst: int, count: int = 1) -> None:
        self.kinds[kind].receives += count
        self.receives[dst] += count

    def transfer(self, kind: str, src: int, dst: int, nbytes: int, tag: str, count: int = 1) -> None:
        """A message delivered immediately (one-sided access)."""
        self.sent(kind, src, dst, nbytes, tag, count)
        self.received(kind, dst, count)

    def record_staleness(self, lag: int, count: int = 1) -> None:
        self.staleness[lag] += count

    def snapshot(self) -> dict:
        return {
            "messages": {k: {"messages": c.messages, "bytes": c.bytes} for k, c in self.kinds.items()},
            "sends": list(self.sends),
            "receives": list(self.receives),
            "staleness": {str(lag): n for lag, n in sorted(self.staleness.items())},
        }

    def total_messages(self) -> int:
        return sum(c.messages for c in self.kinds.values())

    def trace_lines(self) -> list[str]:
        return [f"{seq} {src} {dst} {kind} {nbytes} {tag}" for seq, src, dst, kind, nbytes, tag in (self.log or [])]
