"""Block-distributed arrays with halo exchange."""

from .array import DistributedArray, FaceBuffer, Halo, Violation, block_copy, create_array
from .grid import GridSpec, balanced_split

__all__ = ["DistributedArray", "FaceBuffer", "Halo", "Violation", "block_copy", "create_array", "GridSpec", "balanced_split"]
