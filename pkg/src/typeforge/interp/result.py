from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass
class RunResult:
    procs: int
    iterations: int
    residual_history: list[tuple[int, float]]
    converged: bool
    metrics: dict
    wall_time: float
    norm_b_zero_fallback: bool = False
    arrays: dict[str, Any] = field(default_factory=dict, repr=False)
    finals: list[dict[str, Any]] = field(default_factory=list, repr=False)
    trace: list[str] = field(default_factory=list, repr=False)

    def messages(self, kind: str) -> int:
        return self.metrics["messages"][kind]["messages"]

    def metrics_json(self, *, timing: bool = True) -> dict:
        """The metrics document; ``timing=False`` pins ``wall_time_s`` to 0.0 for byte-stable output."""
        return {
            "procs": self.procs,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_history": [[i, r] for i, r in self.residual_history],
            "messages": {k: dict(v) for k, v in self.metrics["messages"].items()},
            "staleness": dict(self.metrics["staleness"]),
            "wall_time_s": float(self.wall_time) if timing else 0.0,
            "norm_b_zero_fallback": self.norm_b_zero_fallback,
        }

    def dumps(self, *, timing: bool = True) -> str:
        return json.dumps(self.metrics_json(timing=timing), indent=2) + "\n"

    def staleness_stats(self) -> tuple[float, int]:
        hist = {int(k): v for k, v in self.metrics["staleness"].items()}
        n = sum(hist.values())
        if not n:
            return 0.0, 0
        return sum(k * v for k, v in hist.items()) / n, max(hist)
