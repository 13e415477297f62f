"""Dense buffers and zero-copy cropped views with computable access footprints.

A buffer is a row-major numpy array wrapped with a process-unique id.  A view
is an immutable per-axis range descriptor into one buffer; reading or writing
through a view touches the underlying storage directly, so any number of views
can be taken without allocating element storage.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    BlockMisalignmentError,
    InvalidCropError,
    InvalidShapeError,
    ParseError,
)

DEFAULT_DTYPE = np.float64
FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

READ = "read"
WRITE = "write"
READ_WRITE = "read_write"
MODES = (READ, WRITE, READ_WRITE)

_id_counter = itertools.count()


def next_resource_id() -> int:
    """Allocate a process-unique id; buffers and the feature-buffer slot share the space."""
    return next(_id_counter)


def _checked_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(e) for e in shape)
    if not shape:
        raise InvalidShapeError("buffer shape needs at least one axis")
    if any(e < 1 for e in shape):
        raise InvalidShapeError(f"all extents must be >= 1, got {shape}")
    return shape


class TensorBuffer:
    """Owned dense N-d float storage, row-major with the last axis fastest."""

    def __init__(self, data):
        arr = np.ascontiguousarray(data)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        _checked_shape(arr.shape)
        self.id = next_resource_id()
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def view(self) -> "BlockView":
        """Whole-buffer view."""
        return BlockView(self, tuple((0, e) for e in self.shape), origin="whole")

    def __repr__(self):
        return f"TensorBuffer(id={self.id}, shape={self.shape}, dtype={self.dtype})"


def new_buffer(shape, fill: float = 0.0, dtype=DEFAULT_DTYPE) -> TensorBuffer:
    """Allocate a buffer filled with a constant (zeros by default)."""
    shape = _checked_shape(shape)
    return TensorBuffer(np.full(shape, float(fill), dtype=dtype))


def random_buffer(shape, lo: float, hi: float, seed: int, dtype=DEFAULT_DTYPE) -> TensorBuffer:
    """Allocate a buffer of seeded uniform values in [lo, hi)."""
    shape = _checked_shape(shape)
    rng = np.random.default_rng(seed)
    return TensorBuffer(rng.uniform(lo, hi, shape).astype(dtype))


@dataclass(frozen=True)
class BlockView:
    """Rectangular window into a TensorBuffer; never copies element storage.

    elem_ranges is one half-open (start, stop) pair per buffer axis.  Ranges
    are validated eagerly so a bad crop fails at construction, not when some
    task finally runs.
    """

    buffer: TensorBuffer
    elem_ranges: tuple[tuple[int, int], ...]
    origin: str = "crop"

    def __post_init__(self):
        shape = self.buffer.shape
        if len(self.elem_ranges) != len(shape):
            raise InvalidCropError(
                f"{len(self.elem_ranges)} ranges for a rank-{len(shape)} buffer"
            )
        for axis, ((lo, hi), extent) in enumerate(zip(self.elem_ranges, shape)):
            if lo < 0 or hi > extent or lo >= hi:
                raise InvalidCropError(
                    f"axis {axis}: range [{lo}, {hi}) invalid for extent {extent}"
                )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(hi - lo for lo, hi in self.elem_ranges)

    def array(self) -> np.ndarray:
        """The numpy window sharing storage with the underlying buffer."""
        index = tuple(slice(lo, hi) for lo, hi in self.elem_ranges)
        return self.buffer.data[index]

    def to_buffer_coord(self, coord) -> tuple[int, ...]:
        """Translate a view coordinate into the owning buffer's coordinate."""
        return tuple(lo + c for c, (lo, _) in zip(coord, self.elem_ranges))


def bcropped(buf: TensorBuffer, m: int, start_row: int, end_row: int,
             start_col: int, end_col: int) -> BlockView:
    """Crop a rank-2 buffer in m*m blocks; block indices are inclusive.

    The view covers element rows [start_row*m, (end_row+1)*m) and the matching
    column range.
    """
    if len(buf.shape) != 2:
        raise InvalidCropError(f"block crop needs a rank-2 buffer, got shape {buf.shape}")
    if m < 1:
        raise BlockMisalignmentError(f"block size must be >= 1, got {m}")
    rows, cols = buf.shape
    if rows % m or cols % m:
        raise BlockMisalignmentError(f"extents {buf.shape} not divisible by block size {m}")
    nrow, ncol = rows // m, cols // m
    for name, start, end, count in (("row", start_row, end_row, nrow),
                                    ("col", start_col, end_col, ncol)):
        if start < 0 or start > end or end >= count:
            raise InvalidCropError(
                f"{name} blocks [{start}, {end}] out of range for {count} blocks"
            )
    ranges = ((start_row * m, (end_row + 1) * m), (start_col * m, (end_col + 1) * m))
    origin = f"bcropped(m={m}, rows {start_row}..{end_row}, cols {start_col}..{end_col})"
    return BlockView(buf, ranges, origin=origin)


def cropped(buf: TensorBuffer, axis: int, start: int, extent: int) -> BlockView:
    """Restrict a single axis to [start, start+extent); all other axes stay full."""
    rank = len(buf.shape)
    if axis < 0 or axis >= rank:
        raise InvalidCropError(f"axis {axis} out of range for rank-{rank} buffer")
    if extent < 1 or start < 0 or start + extent > buf.shape[axis]:
        raise InvalidCropError(
            f"axis {axis}: [{start}, {start + extent}) outside extent {buf.shape[axis]}"
        )
    ranges = tuple(
        (start, start + extent) if a == axis else (0, e)
        for a, e in enumerate(buf.shape)
    )
    return BlockView(buf, ranges, origin=f"cropped(axis={axis}, start={start}, extent={extent})")


def ranges_overlap(a, b) -> bool:
    """True when two per-axis range tuples intersect on every axis."""
    return all(lo1 < hi2 and lo2 < hi1 for (lo1, hi1), (lo2, hi2) in zip(a, b))


def ranges_intersection(a, b):
    """Per-axis intersection, or None when any axis is disjoint."""
    out = []
    for (lo1, hi1), (lo2, hi2) in zip(a, b):
        lo, hi = max(lo1, lo2), min(hi1, hi2)
        if lo >= hi:
            return None
        out.append((lo, hi))
    return tuple(out)


def views_alias(a: BlockView, b: BlockView) -> bool:
    """True when two views can touch the same element."""
    return a.buffer.id == b.buffer.id and ranges_overlap(a.elem_ranges, b.elem_ranges)


@dataclass(frozen=True)
class AccessSet:
    """The element ranges one task touches in one buffer, tagged read/write."""

    buffer_id: int
    ranges: tuple[tuple[int, int], ...]
    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidCropError(f"unknown access mode {self.mode!r}")

    @property
    def writes(self) -> bool:
        return self.mode != READ

    def conflicts_with(self, other: "AccessSet") -> bool:
        """Same buffer, overlap on every axis, and at least one side writes."""
        if self.buffer_id != other.buffer_id:
            return False
        if not (self.writes or other.writes):
            return False
        return ranges_overlap(self.ranges, other.ranges)

    def intersection(self, other: "AccessSet"):
        if self.buffer_id != other.buffer_id:
            return None
        return ranges_intersection(self.ranges, other.ranges)


def access_set(view: BlockView, mode: str) -> AccessSet:
    """The exact element ranges a view exposes, tagged with an access mode."""
    return AccessSet(view.buffer.id, view.elem_ranges, mode)


# --- tensor-text v1 -------------------------------------------------------
#
# Line 1:  dims d e1 e2 ... ed
# Then whitespace-separated decimal floats in row-major order.

def write_tensor_text(buf: TensorBuffer, path) -> None:
    arr = buf.data
    with open(path, "w") as fh:
        fh.write("dims %d %s\n" % (arr.ndim, " ".join(str(e) for e in arr.shape)))
        flat = arr.reshape(-1)
        per_line = arr.shape[-1]
        for start in range(0, flat.size, per_line):
            fh.write(" ".join(repr(float(v)) for v in flat[start:start + per_line]))
            fh.write("\n")


def read_tensor_text(path, dtype=DEFAULT_DTYPE) -> TensorBuffer:
    with open(path) as fh:
        tokens = fh.read().split()
    if not tokens or tokens[0] != "dims":
        raise ParseError(f"{path}: expected leading 'dims' header")
    try:
        rank = int(tokens[1])
        extents = [int(t) for t in tokens[2:2 + rank]]
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed dims header") from exc
    if len(extents) != rank:
        raise ParseError(f"{path}: dims header shorter than declared rank {rank}")
    shape = _checked_shape(extents)
    body = tokens[2 + rank:]
    count = int(np.prod(shape))
    if len(body) != count:
        raise ParseError(f"{path}: expected {count} values, found {len(body)}")
    try:
        values = np.array([float(t) for t in body], dtype=dtype)
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric value in body") from exc
    return TensorBuffer(values.reshape(shape))
