"""Simulated interconnect of virtual processes."""

from .fabric import NOT_READY, VALUE_BYTES, Fabric, Message, ReduceHandle, Slot, spawn
from .metrics import KINDS, KindCounter, MetricCounters
from .scheduler import Scheduler

__all__ = [
    "NOT_READY", "VALUE_BYTES", "Fabric", "Message", "ReduceHandle", "Slot", "spawn",
    "KINDS", "KindCounter", "MetricCounters", "Scheduler",
]
