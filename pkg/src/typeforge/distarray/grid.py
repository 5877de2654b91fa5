from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import SpecError
from ..typesys.library import CommMode, ResolvedAttributes


def balanced_split(extent: int, count: int) -> list[tuple[int, int]]:
    """Split ``range(extent)`` into ``count`` contiguous pieces.

    Sizes differ by at most one; the remainder goes to the lower-indexed pieces.
    """
    if count < 1 or extent < count:
        raise SpecError(f"cannot split extent {extent} into {count} blocks")
    base, rem = divmod(extent, count)
    out, lo = [], 0
    for b in range(count):
        hi = lo + base + (1 if b < rem else 0)
        out.append((lo, hi))
        lo = hi
    return out


@dataclass(frozen=True)
class GridSpec:
    global_shape: tuple[int, ...]
    blocks: tuple[int, ...]
    halo_depth: int = 0
    mode: CommMode = CommMode.ONE_SIDED
    ranges: tuple[tuple[tuple[int, int], ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        shape, blocks = tuple(self.global_shape), tuple(self.blocks)
        object.__setattr__(self, "global_shape", shape)
        object.__setattr__(self, "blocks", blocks)
        if not shape:
            raise SpecError("a grid needs at least one dimension")
        if len(shape) != len(blocks):
            raise SpecError(f"{len(blocks)} block counts for a {len(shape)}-dimensional array")
        for d, (n, b) in enumerate(zip(shape, blocks)):
            if b < 1 or n < b:
                raise SpecError(f"dimension {d}: extent {n} cannot hold {b} blocks")
        if self.halo_depth < 0:
            raise SpecError("halo depth must be >= 0")
        object.__setattr__(self, "ranges", tuple(tuple(balanced_split(n, b)) for n, b in zip(shape, blocks)))
        if self.halo_depth > 0:
            for d, rs in enumerate(self.ranges):
                if len(rs) > 1 and min(hi - lo for lo, hi in rs) < self.halo_depth:
                    raise SpecError(f"dimension {d}: halo of depth {self.halo_depth} is wider than a block")

    @classmethod
    def from_attrs(cls, attrs: ResolvedAttributes) -> "GridSpec":
        blocks = attrs.partition or (1,) * len(attrs.shape)
        return cls(attrs.shape, blocks, attrs.halo_depth, attrs.comm_mode)

    @property
    def rank(self) -> int:
        return len(self.global_shape)

    @property
    def block_count(self) -> int:
        return int(np.prod(self.blocks))

    def block_coords(self, b: int) -> tuple[int, ...]:
        """Block index to per-dimension block coordinates (x-major order)."""
        return tuple(int(c) for c in np.unravel_index(b, self.blocks))

    def block_index(self, coords) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.blocks))

    def block_box(self, b: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Global ``(lo, hi)`` corners of block ``b`` (hi exclusive)."""
        coords = self.block_coords(b)
        lo = tuple(self.ranges[d][c][0] for d, c in enumerate(coords))
        hi = tuple(self.ranges[d][c][1] for d, c in enumerate(coords))
        return lo, hi

    def block_shape(self, b: int) -> tuple[int, ...]:
        lo, hi = self.block_box(b)
        return tuple(h - l for l, h in zip(lo, hi))

    def block_of_index(self, index) -> int:
        coords = []
        for d, i in enumerate(index):
            for c, (lo, hi) in enumerate(self.ranges[d]):
                if lo <= i < hi:
                    coords.append(c)
                    break
        return self.block_index(coords)

    def neighbours(self, b: int) -> Iterator[tuple[int, int, int]]:
        """``(dim, side, neighbour block)`` for every face of ``b`` touching another block."""
        coords = self.block_coords(b)
        for d in range(self.rank):
            for side in (-1, 1):
                c = coords[d] + side
                if 0 <= c < self.blocks[d]:
                    nb = list(coords)
                    nb[d] = c
                    yield d, side, self.block_index(nb)

    def all_blocks(self) -> range:
        return range(self.block_count)

    def cells(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(n) for n in self.global_shape))
