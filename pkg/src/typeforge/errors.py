"""Exception hierarchy shared by all layers."""

from __future__ import annotations


class MeshamError(Exception):
    pass


class ParseError(MeshamError):
    def __init__(self, message: str, line: int, col: int, token: str = ""):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.token = token

    def __str__(self) -> str:
        near = f" near {self.token!r}" if self.token else ""
        return f"{self.line}:{self.col}: {self.message}{near}"


class CoercionError(MeshamError):
    pass


class TypeCheckFailed(MeshamError):
    """Raised by ``typecheck``; ``errors`` holds the diagnostics."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


# -- fabric ----------------------------------------------------------------


class FabricError(MeshamError):
    pass


class InvalidPid(FabricError):
    pass


class UnknownSlot(FabricError):
    pass


class ReadOnlySlot(FabricError):
    pass


class SelfChannel(FabricError):
    pass


class MismatchedMode(FabricError):
    pass


class DeadlockDetected(FabricError):
    def __init__(self, blocked: dict[int, str]):
        self.blocked = dict(sorted(blocked.items()))
        detail = "; ".join(f"pid {p}: {why}" for p, why in self.blocked.items())
        super().__init__(f"deadlock: every context is blocked ({detail})")


class Aborted(FabricError):
    """Raised inside a context when another context failed first."""


# -- distributed arrays ----------------------------------------------------


class DistError(MeshamError):
    pass


class SpecError(DistError):
    pass


class OutOfBounds(DistError):
    pass


class NoBlockOwned(DistError):
    pass


class MultipleBlocksOwned(DistError):
    pass


class NoHalo(DistError):
    pass


class SpecMismatch(DistError):
    pass


class ReadOnlyError(DistError):
    pass


# -- interpreter -----------------------------------------------------------


class RuntimeFault(MeshamError):
    """A runtime error annotated with the failing pid and source location."""

    def __init__(self, pid: int, loc, cause: BaseException):
        self.pid = pid
        self.loc = loc
        self.cause = cause
        super().__init__(f"pid {pid} at {loc}: {type(cause).__name__}: {cause}")
