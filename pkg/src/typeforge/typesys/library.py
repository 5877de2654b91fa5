"""The type library: validated type chains and their flattened meaning.

A chain is folded left to right; each link overwrites the attributes it
governs, so the rightmost occurrence of a conflicting attribute wins.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Union

from ..errors import CoercionError
from ..frontend.nodes import Ident, TypeChainExpr
from ..frontend.parser import TYPE_NAMES

ELEMENT_KINDS = ("Int", "Double", "Char", "Bool")
ELEMENT_BYTES = {"Double": 8, "Int": 4, "Char": 1, "Bool": 1}


class Placement(enum.Enum):
    REPLICATED = "Replicated"
    ON_PROCESS = "OnProcess"
    DISTRIBUTED = "Distributed"


class CommMode(enum.Enum):
    ONE_SIDED = "OneSidedImmediate"
    CHANNEL = "ChannelP2P"
    HALO_SYNC = "HaloSync"
    HALO_ASYNC = "HaloAsyncSafe"
    HALO_RACY = "HaloAsyncRacy"

    @property
    def is_halo(self) -> bool:
        return self in (CommMode.HALO_SYNC, CommMode.HALO_ASYNC, CommMode.HALO_RACY)

    @property
    def is_async(self) -> bool:
        return self in (CommMode.HALO_ASYNC, CommMode.HALO_RACY)


class Mutability(enum.Enum):
    READ_WRITE = "ReadWrite"
    READ_ONLY = "ReadOnly"


@dataclass(frozen=True)
class TypeLink:
    name: str
    args: tuple = ()

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}[{', '.join(str(a) for a in self.args)}]"


@dataclass(frozen=True)
class TypeChain:
    links: tuple[TypeLink, ...]

    def __post_init__(self):
        if not self.links:
            raise CoercionError("a type chain needs at least one type")

    def __str__(self) -> str:
        return " :: ".join(str(link) for link in self.links)


@dataclass(frozen=True)
class ResolvedAttributes:
    element: str
    shape: tuple[int, ...] = ()
    placement: Placement = Placement.REPLICATED
    owner: Optional[int] = None  # set for Placement.ON_PROCESS
    partition: Optional[tuple[int, ...]] = None
    distribution: Optional[str] = None  # "EvenDist"
    halo_depth: int = 0
    comm_mode: CommMode = CommMode.ONE_SIDED
    channel: Optional[tuple[int, int]] = None  # (src, dst) for CommMode.CHANNEL
    mutability: Mutability = Mutability.READ_WRITE

    @property
    def is_array(self) -> bool:
        return bool(self.shape)

    @property
    def readonly(self) -> bool:
        return self.mutability is Mutability.READ_ONLY

    def storage_key(self) -> tuple:
        """Attributes that fix how a variable is laid out in memory."""
        return (self.element, self.shape, self.placement, self.owner, self.partition,
                self.distribution, self.halo_depth)


# -- building chains from syntax -------------------------------------------

# contexts a link may appear in
TOP, ALLOC, SINGLE, HALO, ELEM = "top", "allocated[...]", "single[...]", "halo argument of grid", "array element"

_CONTEXTS = {
    "Int": {TOP, ELEM}, "Double": {TOP, ELEM}, "Char": {TOP, ELEM}, "Bool": {TOP, ELEM},
    "array": {TOP},
    "allocated": {TOP},
    "single": {ALLOC},
    "on": {SINGLE},
    "evendist": {SINGLE},
    "grid": {ALLOC},
    "halo": {TOP, ALLOC, HALO},
    "async": {TOP, ALLOC, HALO},
    "racy": {TOP, ALLOC, HALO},
    "channel": {TOP},
    "const": {TOP},
    "writable": {TOP},
}
assert set(_CONTEXTS) == TYPE_NAMES


def _int_arg(name: str, arg, what: str, minimum: int) -> int:
    if not isinstance(arg, int) or isinstance(arg, bool):
        raise CoercionError(f"{name}: {what} must be an integer, got {arg}")
    if arg < minimum:
        raise CoercionError(f"{name}: {what} must be >= {minimum}, got {arg}")
    return arg


def _chain_arg(name: str, arg) -> "TypeChain":
    if not isinstance(arg, TypeChain):
        raise CoercionError(f"{name}: expected a type chain argument, got {arg}")
    return arg


def _validate_link(link: TypeLink) -> None:
    name, args = link.name, link.args
    if name not in TYPE_NAMES:
        raise CoercionError(f"unknown type '{name}'")
    if name in ELEMENT_KINDS or name in ("evendist", "async", "racy", "const", "writable"):
        if args:
            raise CoercionError(f"{name} takes no arguments")
    elif name == "array":
        if len(args) < 2:
            raise CoercionError("array needs an element type and at least one extent")
        _chain_arg(name, args[0])
        for a in args[1:]:
            _int_arg(name, a, "extent", 1)
    elif name in ("allocated", "single"):
        if len(args) != 1:
            raise CoercionError(f"{name} takes exactly one type chain")
        _chain_arg(name, args[0])
    elif name == "on":
        if len(args) != 1:
            raise CoercionError("on takes exactly one process id")
        _int_arg(name, args[0], "process id", 0)
    elif name == "grid":
        counts = list(args)
        if counts and isinstance(counts[0], TypeChain):
            counts = counts[1:]
        if not counts:
            raise CoercionError("grid needs a block count per dimension")
        for a in counts:
            _int_arg(name, a, "block count", 1)
    elif name == "halo":
        if len(args) != 1:
            raise CoercionError("halo takes exactly one depth")
        _int_arg(name, args[0], "depth", 0)
    elif name == "channel":
        if len(args) != 2:
            raise CoercionError("channel takes a source and a destination process id")
        for a in args:
            _int_arg(name, a, "process id", 0)


def build_chain(expr: TypeChainExpr, consts: Mapping[str, int] = {}) -> TypeChain:
    """Turn parsed chain syntax into a validated ``TypeChain``.

    Identifier arguments are replaced by their compile-time constant value.
    """

    def convert(arg):
        if isinstance(arg, TypeChainExpr):
            return build_chain(arg, consts)
        if isinstance(arg, Ident):
            if arg.name not in consts:
                raise CoercionError(f"'{arg.name}' is not a compile-time integer constant")
            return consts[arg.name]
        return arg

    links = []
    for inst in expr.links:
        link = TypeLink(inst.name, tuple(convert(a) for a in inst.args))
        _validate_link(link)
        links.append(link)
    return TypeChain(tuple(links))


def parse_chain(text: str, consts: Mapping[str, int] = {}) -> TypeChain:
    """Convenience: build a chain from source text such as ``"Char :: const"``."""
    from ..frontend.parser import _Parser
    from ..frontend.lexer import tokenize

    p = _Parser(tokenize(text))
    expr = p.chain()
    if p.peek().kind != "eof":
        p.fail("trailing input after type chain")
    return build_chain(expr, consts)


# -- resolution ------------------------------------------------------------


class _Fold:
    def __init__(self):
        self.element: Optional[str] = None
        self.base_link: Optional[str] = None
        self.shape: tuple[int, ...] = ()
        self.allocated = False
        self.placement: Optional[Placement] = None
        self.owner: Optional[int] = None
        self.partition: Optional[tuple[int, ...]] = None
        self.distribution: Optional[str] = None
        self.halo_depth = 0
        self.comm_mode = CommMode.ONE_SIDED
        self.channel: Optional[tuple[int, int]] = None
        self.mutability = Mutability.READ_WRITE

    def set_comm(self, mode: CommMode, channel=None):
        self.comm_mode = mode
        self.channel = channel

    def apply(self, link: TypeLink, ctx: str):
        name = link.name
        if ctx not in _CONTEXTS[name]:
            raise CoercionError(f"{name} cannot appear in {ctx} context")
        if name in ELEMENT_KINDS or name == "array":
            if self.base_link is not None:
                raise CoercionError(f"{self.base_link}::{name} is meaningless: a chain holds exactly one element type")
            self.base_link = name
            if name == "array":
                elem = _Fold()
                for inner in link.args[0].links:
                    elem.apply(inner, ELEM)
                self.element = elem.element
                self.shape = tuple(link.args[1:])
            else:
                self.element = name
        elif name == "allocated":
            self.allocated = True
            self.placement = self.owner = self.partition = self.distribution = None
            self.halo_depth = 0
            if self.comm_mode.is_halo:
                self.set_comm(CommMode.ONE_SIDED)
            for inner in link.args[0].links:
                self.apply(inner, ALLOC)
        elif name == "single":
            for inner in link.args[0].links:
                self.apply(inner, SINGLE)
        elif name == "on":
            self.placement, self.owner, self.distribution = Placement.ON_PROCESS, link.args[0], None
        elif name == "evendist":
            self.placement, self.owner, self.distribution = Placement.DISTRIBUTED, None, "EvenDist"
        elif name == "grid":
            counts = link.args
            if counts and isinstance(counts[0], TypeChain):
                for inner in counts[0].links:
                    self.apply(inner, HALO)
                counts = counts[1:]
            self.partition = tuple(counts)
        elif name == "halo":
            self.halo_depth = link.args[0]
            self.set_comm(CommMode.HALO_SYNC if self.halo_depth > 0 else CommMode.ONE_SIDED)
        elif name == "async":
            self.set_comm(CommMode.HALO_ASYNC)
        elif name == "racy":
            if self.comm_mode is not CommMode.HALO_ASYNC:
                raise CoercionError("racy refines async halo communication; it must follow async")
            self.set_comm(CommMode.HALO_RACY)
        elif name == "channel":
            self.set_comm(CommMode.CHANNEL, tuple(link.args))
        elif name == "const":
            self.mutability = Mutability.READ_ONLY
        elif name == "writable":
            self.mutability = Mutability.READ_WRITE

    def finish(self) -> ResolvedAttributes:
        if self.element is None:
            raise CoercionError("type chain has no element type (Int, Double, Char, Bool or array)")
        placement, distribution = Placement.REPLICATED, None
        if self.allocated:
            if self.partition is not None:
                if self.placement is Placement.ON_PROCESS:
                    raise CoercionError("grid partitions are distributed with single[evendist], not single[on[...]]")
                placement, distribution = Placement.DISTRIBUTED, "EvenDist"
            elif self.placement is Placement.ON_PROCESS:
                placement = Placement.ON_PROCESS
            elif self.distribution == "EvenDist":
                raise CoercionError("evendist needs a grid partition to distribute")
            else:
                raise CoercionError("allocated needs single[...] or grid[...]")
        if self.partition is not None and len(self.partition) != len(self.shape):
            if not self.shape:
                raise CoercionError("a grid partition needs an array, not a scalar")
            raise CoercionError(
                f"grid has {len(self.partition)} block counts but the array has {len(self.shape)} dimensions"
            )
        if self.halo_depth > 0 and self.partition is None:
            raise CoercionError("halo needs a grid partition in the allocation")
        if self.comm_mode.is_async and self.halo_depth == 0:
            raise CoercionError("async halo communication needs halo[n] with n > 0")
        return ResolvedAttributes(
            element=self.element,
            shape=self.shape,
            placement=placement,
            owner=self.owner if placement is Placement.ON_PROCESS else None,
            partition=self.partition,
            distribution=distribution,
            halo_depth=self.halo_depth,
            comm_mode=self.comm_mode,
            channel=self.channel,
            mutability=self.mutability,
        )


def resolve(chain: TypeChain) -> ResolvedAttributes:
    fold = _Fold()
    for link in chain.links:
        fold.apply(link, TOP)
    return fold.finish()


def coerce(chain: TypeChain, addition: Union[TypeChain, TypeLink]) -> TypeChain:
    """Append ``addition`` to ``chain``; the result must still resolve."""
    extra = (addition,) if isinstance(addition, TypeLink) else addition.links
    result = TypeChain(chain.links + tuple(extra))
    resolve(result)
    return result


def with_mutability(attrs: ResolvedAttributes, mutability: Mutability) -> ResolvedAttributes:
    return replace(attrs, mutability=mutability)
