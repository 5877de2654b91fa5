from __future__ import annotations

from importlib import resources

import pytest
from hypothesis import HealthCheck, settings

from typeforge.frontend import SourceProgram, parse
from typeforge.interp import run_program
from typeforge.typesys import typecheck

settings.register_profile("typeforge", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("typeforge")

LISTINGS = ("listing1", "listing2", "listing3", "listing4", "listing5", "listing5_racy")


def bundled_text(name: str) -> str:
    return resources.files("typeforge.programs").joinpath(name + ".msh").read_text(encoding="utf-8")


def compile_source(text: str, origin: str = "<test>"):
    return typecheck(parse(SourceProgram(text, origin)), origin)


def run_source(text: str, procs: int = 1, seed: int = 0, **options):
    return run_program(compile_source(text), procs, seed, **options)


@pytest.fixture
def listing():
    return bundled_text


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
