"""Command line: ``typeforge check``, ``typeforge run`` and ``typeforge bench jacobi``.

Exit codes:

* ``check``: 0 ok, 1 parse or type errors, 2 unreadable file.
* ``run``: 0 ok, 1 program error, 2 unreadable file or unwritable output, 3 deadlock.
* ``bench jacobi``: 0 converged, 1 not converged or run error, 2 unwritable output, 4 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from typing import Optional, Sequence

from . import __version__
from .errors import DeadlockDetected, MeshamError, RuntimeFault
from .frontend import SourceProgram, parse
from .interp import FACES, run_program
from .jacobi import MODES, ConfigError, JacobiConfig, run_bench
from .typesys import typecheck

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_IO = 2
EXIT_DEADLOCK = 3
EXIT_CONFIG = 4

SEED_ENV = "TYPEFORGE_SEED"


def bundled_programs() -> list[str]:
    root = resources.files("typeforge.programs")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".msh"))


def load_source(path: str) -> SourceProgram:
    """Read ``path``; a bare bundled name such as ``listing3`` also works."""
    if not os.path.exists(path):
        name = path[:-4] if path.endswith(".msh") else path
        if os.sep not in path and name in bundled_programs():
            text = resources.files("typeforge.programs").joinpath(name + ".msh").read_text(encoding="utf-8")
            return SourceProgram(text, name + ".msh")
    return SourceProgram.from_path(path)


def _err(msg: str) -> None:
    print(f"typeforge: {msg}", file=sys.stderr)


def _seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _dump_field(result, path: str, name: Optional[str]) -> None:
    if not result.arrays:
        raise ConfigError("the program has no distributed arrays to dump")
    if name is None:
        name = "data" if "data" in result.arrays else next(iter(result.arrays))
    if name not in result.arrays:
        raise ConfigError(f"no distributed array named {name!r}; have {', '.join(result.arrays)}")
    result.arrays[name].dump_csv(path)


def _typed(path: str):
    source = load_source(path)
    ast = parse(source)
    return typecheck(ast, source.origin)


# -- commands ----------------------------------------------------------------


def cmd_check(args) -> int:
    try:
        typed = _typed(args.path)
    except OSError as exc:
        _err(f"cannot read {args.path}: {exc.strerror or exc}")
        return EXIT_IO
    except MeshamError as exc:
        print(exc, file=sys.stderr)
        return EXIT_FAIL
    for w in typed.warnings:
        print(w, file=sys.stderr)
    print(f"{typed.origin}: ok")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        typed = _typed(args.path)
    except OSError as exc:
        _err(f"cannot read {args.path}: {exc.strerror or exc}")
        return EXIT_IO
    except MeshamError as exc:
        print(exc, file=sys.stderr)
        return EXIT_FAIL
    try:
        seed = _seed(args.seed)
        if args.procs < 1:
            raise ConfigError("--procs must be >= 1")
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_IO
    try:
        result = run_program(typed, args.procs, seed, free_running=args.free_running,
                             vectorize=not args.no_vectorize, trace=args.trace is not None)
    except DeadlockDetected as exc:
        _err(str(exc))
        return EXIT_DEADLOCK
    except RuntimeFault as exc:
        if isinstance(exc.cause, DeadlockDetected):
            _err(str(exc))
            return EXIT_DEADLOCK
        _err(str(exc))
        return EXIT_FAIL
    except MeshamError as exc:
        _err(str(exc))
        return EXIT_FAIL
    try:
        text = result.dumps(timing=not args.no_timing)
        if args.metrics:
            _write_text(args.metrics, text)
        else:
            sys.stdout.write(text)
        if args.trace:
            _write_text(args.trace, "".join(line + "\n" for line in result.trace))
        if args.dump_field:
            _dump_field(result, args.dump_field, args.field)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_FAIL
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_IO
    return EXIT_OK


def _parse_bc(items: Optional[list[str]]) -> dict[str, float]:
    if not items:
        return {"x-": 1.0}
    bc = {}
    for item in items:
        face, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--bc expects FACE=VALUE, got {item!r}")
        try:
            bc[face.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--bc value for {face} is not a number: {value!r}") from None
    return bc


def cmd_bench_jacobi(args) -> int:
    try:
        cfg = JacobiConfig(nx=args.nx, ny=args.ny, nz=args.nz, px=args.px, py=args.py, pz=args.pz,
                           mode=args.mode, tol=args.tol, max_iters=args.max_iters,
                           bc=_parse_bc(args.bc), halo=not args.no_halo).validate()
        seed = _seed(args.seed)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        report = run_bench(cfg, seed, free_running=args.free_running, vectorize=not args.no_vectorize,
                           debug_versions=args.check_versions, trace=args.trace is not None)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except (DeadlockDetected, RuntimeFault, MeshamError) as exc:
        _err(str(exc))
        return EXIT_FAIL
    doc = report.to_json(timing=not args.no_timing)
    try:
        text = json.dumps(doc, indent=2) + "\n"
        if args.out:
            _write_text(args.out, text)
        else:
            sys.stdout.write(text)
        if args.trace:
            _write_text(args.trace, "".join(line + "\n" for line in report.result.trace))
        if args.dump_field:
            report.result.arrays["data"].dump_csv(args.dump_field)
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_IO
    r = report.result
    status = "converged" if r.converged else "did not converge"
    print(f"{cfg.mode} {cfg.nx}x{cfg.ny}x{cfg.nz} on {cfg.px}x{cfg.py}x{cfg.pz}: {status} after {r.iterations} "
          f"iterations, true residual {report.final_true_residual:.3e}", file=sys.stderr)
    if args.check_versions and report.soundness_violations:
        _err(f"{report.soundness_violations} halo values were never published")
    return EXIT_OK if r.converged else EXIT_FAIL


# -- argument parsing ------------------------------------------------------------


class _ConfigParser(argparse.ArgumentParser):
    """Bad benchmark flags are configuration errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help=f"scheduler seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--free-running", action="store_true",
                   help="let process threads interleave freely instead of the seeded schedule")
    p.add_argument("--trace", metavar="LOG", help="write one line per message: seq src dst kind bytes tag")
    p.add_argument("--dump-field", metavar="CSV", help="write the final field as i,j,k,value lines")
    p.add_argument("--no-timing", action="store_true", help="report wall_time_s as 0 for reproducible output")
    p.add_argument("--no-vectorize", action="store_true", help="run every loop cell by cell")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="typeforge", description="Type-oriented PGAS interpreter for a Mesham subset.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    bundled = ", ".join(bundled_programs())
    p = sub.add_parser("check", help="parse and typecheck a program")
    p.add_argument("path", help=f"a .msh file or a bundled program ({bundled})")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="run a program on virtual processes")
    p.add_argument("path", help=f"a .msh file or a bundled program ({bundled})")
    p.add_argument("--procs", type=int, default=1, help="number of virtual processes (default 1)")
    p.add_argument("--metrics", metavar="JSON", help="write the metrics document here instead of stdout")
    p.add_argument("--field", metavar="NAME", help="array for --dump-field (default: data, else the first)")
    _output_flags(p)
    p.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="generated benchmarks")
    bsub = bench.add_subparsers(dest="bench", required=True, parser_class=_ConfigParser)
    p = bsub.add_parser("jacobi", help="Jacobi iteration for Laplace's equation")
    for dim in "xyz":
        p.add_argument(f"--n{dim}", type=int, default=16, help=f"global grid points along {dim} (default 16)")
    for dim in "xyz":
        p.add_argument(f"--p{dim}", type=int, default=1, help=f"blocks along {dim} (default 1)")
    p.add_argument("--mode", default="sync", help=f"halo mode: {', '.join(MODES)} (default sync)")
    p.add_argument("--no-halo", action="store_true", help="plain one-sided layout without a halo (sync only)")
    p.add_argument("--tol", type=float, default=1e-4, help="relative residual threshold (default 1e-4)")
    p.add_argument("--max-iters", type=int, default=10000, help="iteration cap (default 10000)")
    p.add_argument("--bc", action="append", metavar="FACE=VALUE",
                   help=f"Dirichlet value of a face, one of {', '.join(FACES)}; repeatable (default x-=1)")
    p.add_argument("--out", metavar="JSON", help="write the report here instead of stdout")
    p.add_argument("--check-versions", action="store_true",
                   help="tag halo values with versions and count any never published")
    _output_flags(p)
    p.set_defaults(func=cmd_bench_jacobi)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
