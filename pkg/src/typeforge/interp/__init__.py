"""SPMD interpreter and the Jacobi builtins."""

from .builtins import DEFAULT_BC, FACES, jacobi_step, normalize_bc
from .interpreter import RunOptions, run_program
from .result import RunResult

__all__ = ["DEFAULT_BC", "FACES", "jacobi_step", "normalize_bc", "RunOptions", "run_program", "RunResult"]
