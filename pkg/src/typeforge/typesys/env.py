from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .library import ResolvedAttributes, TypeChain


@dataclass(frozen=True)
class VarInfo:
    name: str
    chain: Optional[TypeChain]  # None after an invalid declaration
    attrs: Optional[ResolvedAttributes]
    const_value: Optional[Union[int, float]] = None
    retyped: bool = False


class TypeEnvironment:
    """Stack of scopes mapping names to their current chain.

    A retype binds the variable again in the innermost scope, so popping that
    scope restores the chain the variable had when the block was entered.
    """

    def __init__(self):
        self.scopes: list[dict[str, VarInfo]] = [{}]

    def lookup(self, name: str) -> Optional[VarInfo]:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def declared_here(self, name: str) -> bool:
        info = self.scopes[-1].get(name)
        return info is not None and not info.retyped

    def declare(self, info: VarInfo) -> None:
        self.scopes[-1][info.name] = info

    def retype(self, name: str, chain: TypeChain, attrs: ResolvedAttributes) -> None:
        old = self.lookup(name)
        self.scopes[-1][name] = VarInfo(name, chain, attrs, old.const_value if old else None, retyped=True)

    def push(self) -> None:
        self.scopes.append({})

    def pop(self) -> None:
        if len(self.scopes) == 1:
            raise RuntimeError("cannot pop the global scope")
        self.scopes.pop()

    @contextmanager
    def scope(self):
        self.push()
        try:
            yield self
        finally:
            self.pop()

    def constants(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for scope in self.scopes:
            for name, info in scope.items():
                if isinstance(info.const_value, int) and not isinstance(info.const_value, bool):
                    out[name] = info.const_value
                else:
                    out.pop(name, None)
        return out

    def snapshot(self) -> dict[str, Optional[TypeChain]]:
        """Chains of every visible name (innermost binding wins)."""
        view: dict[str, Optional[TypeChain]] = {}
        for scope in self.scopes:
            for name, info in scope.items():
                view[name] = info.chain
        return view


def with_scope(env: TypeEnvironment, block, action: Callable[[TypeEnvironment, object], None]) -> TypeEnvironment:
    """Run ``action(env, block)`` inside a fresh scope and return ``env``.

    Retypes made by ``action`` are undone when the scope closes.
    """
    with env.scope():
        action(env, block)
    return env
