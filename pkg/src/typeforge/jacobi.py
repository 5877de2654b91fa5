"""The Jacobi benchmark: program generation, execution and reporting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import MeshamError
from .frontend import SourceProgram, parse
from .interp import RunResult, normalize_bc, run_program
from .typesys import typecheck

MODES = ("sync", "async", "racy")

GRID_ARGS = {
    None: "grid[x, y, z]",
    "sync": "grid[halo[1], x, y, z]",
    "async": "grid[halo[1] :: async, x, y, z]",
    "racy": "grid[halo[1] :: async :: racy, x, y, z]",
}


class ConfigError(ValueError):
    pass


def array_chain(mode: Optional[str], halo: bool = True) -> str:
    """Type chain of the grid arrays; ``halo=False`` gives the plain one-sided layout."""
    grid = GRID_ARGS[mode if halo else None]
    return f"array[Double, nx, ny, nz] :: allocated[{grid} :: single[evendist]]"


@dataclass
class JacobiConfig:
    nx: int = 16
    ny: int = 16
    nz: int = 16
    px: int = 1
    py: int = 1
    pz: int = 1
    mode: str = "sync"
    tol: float = 1e-4
    max_iters: int = 10000
    bc: dict = field(default_factory=lambda: {"x-": 1.0})
    halo: bool = True

    @property
    def procs(self) -> int:
        return self.px * self.py * self.pz

    def validate(self) -> "JacobiConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        for name in ("px", "py", "pz"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for n, p, d in ((self.nx, self.px, "x"), (self.ny, self.py, "y"), (self.nz, self.pz, "z")):
            if n < 1:
                raise ConfigError(f"n{d} must be >= 1")
            if n < p:
                raise ConfigError(f"n{d}={n} cannot be split into p{d}={p} blocks")
        if not self.tol > 0 or not math.isfinite(self.tol):
            raise ConfigError("tol must be a positive number")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.halo and self.mode != "sync":
            raise ConfigError(f"{self.mode} mode needs a halo; drop --no-halo")
        try:
            self.bc = normalize_bc(self.bc)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


def program_text(cfg: JacobiConfig) -> str:
    """Mesham source of the benchmark, with the mode's type chain on both grid arrays."""
    chain = array_chain(cfg.mode, cfg.halo)
    label = cfg.mode if cfg.halo else "one-sided, no halo"
    return f"""// Jacobi iteration for Laplace's equation ({label})
var nx : Int :: const := {cfg.nx};
var ny : Int :: const := {cfg.ny};
var nz : Int :: const := {cfg.nz};
var x : Int :: const := {cfg.px};
var y : Int :: const := {cfg.py};
var z : Int :: const := {cfg.pz};
var maxIters : Int :: const := {cfg.max_iters};
var threshold : Double :: const := {float(cfg.tol)!r};
var norm_r : Double;

var data : {chain};
var new_data : {chain};

zeroGrid(data);
var norm_b := fillBoundaryConditions(data);
new_data := data;

for i from 0 to maxIters {{
    norm_r := computeResidue(data);
    norm_r := norm_r / norm_b;
    if (norm_r < threshold) break;

    for i from data[pid()].low to data[pid()].high {{
        for j from data[pid()][i].low to data[pid()][i].high {{
            for k from data[pid()][i][j].low to data[pid()][i][j].high {{
                new_data[i][j][k] := (data[i + 1][j][k] + data[i - 1][j][k]
                    + data[i][j + 1][k] + data[i][j - 1][k]
                    + data[i][j][k + 1] + data[i][j][k - 1]) * 1.0 / 6.0;
            }};
        }};
    }};

    data := new_data;
    sync data;
}}
"""


def true_residual(field_: np.ndarray, bc: Mapping[str, float]) -> float:
    """Relative residual of a global field, computed directly with numpy.

    Uses the same normalisation as the run: ``norm_b``, or 1 when it is zero.
    """
    u = np.asarray(field_, dtype=np.float64)
    if min(u.shape) < 3:
        return 0.0
    c = u[1:-1, 1:-1, 1:-1]
    r = (u[2:, 1:-1, 1:-1] + u[:-2, 1:-1, 1:-1] + u[1:-1, 2:, 1:-1] + u[1:-1, :-2, 1:-1]
         + u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2]) - 6.0 * c
    bc = normalize_bc(bc)
    rhs = np.zeros_like(c)
    rhs[0, :, :] += bc["x-"]
    rhs[-1, :, :] += bc["x+"]
    rhs[:, 0, :] += bc["y-"]
    rhs[:, -1, :] += bc["y+"]
    rhs[:, :, 0] += bc["z-"]
    rhs[:, :, -1] += bc["z+"]
    norm_b = math.sqrt(float(np.sum(rhs * rhs))) or 1.0
    return math.sqrt(float(np.sum(r * r))) / norm_b


@dataclass
class BenchReport:
    config: JacobiConfig
    result: RunResult
    final_true_residual: float
    soundness_violations: int = 0
    checked_faces: int = 0

    def derived(self) -> dict:
        iters = max(self.result.iterations, 1)
        mean, worst = self.result.staleness_stats()
        return {
            "messages_per_iteration": {
                k: v["messages"] / iters for k, v in self.result.metrics["messages"].items()
            },
            "staleness_mean": mean,
            "staleness_max": worst,
            "final_true_residual": self.final_true_residual,
        }

    def to_json(self, *, timing: bool = True) -> dict:
        cfg = asdict(self.config)
        return {"config": cfg, "result": self.result.metrics_json(timing=timing), "derived": self.derived()}


def run_bench(cfg: JacobiConfig, seed: int = 0, *, free_running: bool = False, vectorize: bool = True,
              debug_versions: bool = False, trace: bool = False, fuzz: bool = False) -> BenchReport:
    cfg.validate()
    source = SourceProgram(program_text(cfg), f"<jacobi {cfg.mode}>")
    try:
        typed = typecheck(parse(source), source.origin)
    except MeshamError as exc:
        raise ConfigError(str(exc)) from exc
    result = run_program(typed, cfg.procs, seed, free_running=free_running, bc=cfg.bc, vectorize=vectorize,
                         debug_versions=debug_versions, trace=trace, fuzz=fuzz)
    data = result.arrays["data"]
    report = BenchReport(cfg, result, true_residual(data.gather_global(), cfg.bc))
    report.soundness_violations = len(data.violations)
    report.checked_faces = data.checked_faces
    return report
