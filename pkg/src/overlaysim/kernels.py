"""Software bodies of the six overlay kernels, plus the on-chip feature buffer model.

The four dense linear-algebra kernels update their operands in place: results
land in the same storage the input views expose.  The CNN kernels route their
input/output through either DDR views or the single-slot feature buffer,
selected by control flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AliasingError,
    EmptyFeatureBufferError,
    ShapeError,
    SingularPivotError,
)
from .tensors import BlockView, TensorBuffer, next_resource_id, views_alias

# pivots below this magnitude count as singular (no pivoting is performed)
PIVOT_EPSILON = {
    np.dtype(np.float64): 1e-12,
    np.dtype(np.float32): 1e-6,
}


def pivot_epsilon(dtype) -> float:
    return PIVOT_EPSILON[np.dtype(dtype)]


@dataclass(frozen=True)
class GemmCoefficients:
    """Scaling factors for the fused update C = alpha*C + beta*A*(gamma*B)."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"coefficient {name} must be finite")


@dataclass
class ConvControlFlags:
    """Control signals that reconfigure the convolution kernel per task."""

    read_input_from_buffer: bool
    store_output_to_buffer: bool
    with_ReLU: bool
    is_FC_layer: bool


@dataclass
class FeatureBuffer:
    """Single on-chip slot carrying an intermediate feature map between layers.

    The slot is reallocated when the stored shape changes and reused
    otherwise.  shape_log records every stored shape, in order, so tests can
    follow the spatial extents through a pipeline.
    """

    slot: TensorBuffer | None = None
    valid: bool = False
    resource_id: int = field(default_factory=next_resource_id)
    shape_log: list = field(default_factory=list)

    def store(self, arr: np.ndarray) -> None:
        if self.slot is not None and self.slot.shape == arr.shape and self.slot.dtype == arr.dtype:
            self.slot.data[...] = arr
        else:
            self.slot = TensorBuffer(arr)
        self.valid = True
        self.shape_log.append(tuple(arr.shape))

    def read(self) -> np.ndarray:
        if not self.valid or self.slot is None:
            raise EmptyFeatureBufferError("feature buffer read before any store")
        return self.slot.data


def _matrix(view: BlockView, what: str) -> np.ndarray:
    arr = view.array()
    if arr.ndim != 2:
        raise ShapeError(f"{what}: expected a rank-2 view, got shape {arr.shape}")
    return arr


def lu_factor_block(block: BlockView) -> None:
    """Factor a square block into L and U stored in place.

    The strict lower triangle holds L's sub-diagonal entries (its unit
    diagonal is implicit); the upper triangle including the diagonal holds U.
    No pivoting: a near-zero pivot raises instead.
    """
    a = _matrix(block, "lu_factor_block")
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"lu_factor_block: block must be square, got {a.shape}")
    m = a.shape[0]
    eps = pivot_epsilon(a.dtype)
    for k in range(m):
        pivot = a[k, k]
        if abs(pivot) < eps:
            raise SingularPivotError(k, float(pivot))
        a[k + 1:, k] /= pivot
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])


def transform_row_panel(panel: BlockView) -> None:
    """Apply L_ii^-1 to the trailing blocks of an m x (k*m) row panel, in place.

    The first m x m block must hold a prior lu_factor_block result; only its
    strict lower triangle (plus the implicit unit diagonal) is read.
    """
    a = _matrix(panel, "transform_row_panel")
    m, width = a.shape
    if width <= m or width % m:
        raise ShapeError(
            f"transform_row_panel: panel must be m x (k*m) with k >= 2, got {a.shape}"
        )
    lower = a[:, :m]
    trailing = a[:, m:]
    # forward substitution with unit diagonal, all trailing columns at once
    for r in range(1, m):
        trailing[r, :] -= lower[r, :r] @ trailing[:r, :]


def transform_column_panel(panel: BlockView) -> None:
    """Apply U_ii^-1 from the right to the trailing blocks of a (k*m) x m column panel.

    The first m x m block must hold U_ii in its upper triangle (a
    lu_factor_block result); the strict lower part is ignored.
    """
    a = _matrix(panel, "transform_column_panel")
    height, m = a.shape
    if height <= m or height % m:
        raise ShapeError(
            f"transform_column_panel: panel must be (k*m) x m with k >= 2, got {a.shape}"
        )
    upper = a[:m, :]
    trailing = a[m:, :]
    eps = pivot_epsilon(a.dtype)
    for c in range(m):
        diag = upper[c, c]
        if abs(diag) < eps:
            raise SingularPivotError(c, float(diag))
        if c:
            trailing[:, c] -= trailing[:, :c] @ upper[:c, c]
        trailing[:, c] /= diag


def gemm(c: BlockView, a: BlockView, b: BlockView, co: GemmCoefficients) -> None:
    """C = alpha*C + beta*A*(gamma*B), in place on C.

    C must not share elements with A or B: the product is accumulated into
    C's storage directly.
    """
    cm = _matrix(c, "gemm C")
    am = _matrix(a, "gemm A")
    bm = _matrix(b, "gemm B")
    if am.shape[1] != bm.shape[0]:
        raise ShapeError(f"gemm: inner dimensions {am.shape} x {bm.shape} disagree")
    if cm.shape != (am.shape[0], bm.shape[1]):
        raise ShapeError(
            f"gemm: C has shape {cm.shape}, expected {(am.shape[0], bm.shape[1])}"
        )
    if views_alias(c, a) or views_alias(c, b):
        raise AliasingError("gemm: C overlaps an input operand")
    cm[...] = co.alpha * cm + co.beta * (am @ (co.gamma * bm))


def _squeeze_to(arr: np.ndarray, rank: int, what: str) -> np.ndarray:
    """Drop trailing unit axes down to the target rank (crops keep full rank)."""
    while arr.ndim > rank and arr.shape[-1] == 1:
        arr = arr.reshape(arr.shape[:-1])
    if arr.ndim != rank:
        raise ShapeError(f"{what}: expected rank {rank}, got shape {arr.shape}")
    return arr


def _conv2d_same(arr: np.ndarray, wt: np.ndarray) -> np.ndarray:
    """Stride-1 cross-correlation with zero padding that preserves H x W."""
    h, w, cin = arr.shape
    kh, kw, wcin, cout = wt.shape
    if wcin != cin:
        raise ShapeError(f"convolution: input has {cin} channels, weights expect {wcin}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    padded = np.zeros((h + kh - 1, w + kw - 1, cin), dtype=np.result_type(arr, wt))
    padded[ph:ph + h, pw:pw + w, :] = arr
    out = np.zeros((h, w, cout), dtype=padded.dtype)
    for u in range(kh):
        for v in range(kw):
            out += np.tensordot(padded[u:u + h, v:v + w, :], wt[u, v], axes=([2], [0]))
    return out


def _deliver(out: np.ndarray, y: BlockView, store_to_buffer: bool,
             fb: FeatureBuffer | None) -> None:
    if store_to_buffer:
        if fb is None:
            raise EmptyFeatureBufferError("no feature buffer available for store")
        fb.store(out)
        return
    dst = y.array()
    if dst.size != out.size:
        raise ShapeError(f"output view holds {dst.size} elements, result has {out.size}")
    dst[...] = out.reshape(dst.shape)


def convolution(x: BlockView, y: BlockView, w: BlockView,
                flags: ConvControlFlags, fb: FeatureBuffer | None) -> None:
    """Convolution / fully-connected kernel with flag-selected I/O routing.

    Plain mode: H x W x Cin input, Kh x Kw x Cin x Cout weights, stride-1
    zero-padded cross-correlation preserving H x W.  FC mode: the input is
    flattened and the weights act as an (out, in) matrix.  Input comes from
    the feature buffer or the X view; output goes to the feature buffer or
    the Y view.  When a flag routes I/O through the feature buffer the
    corresponding view argument is ignored entirely.
    """
    if flags.read_input_from_buffer:
        if fb is None or not fb.valid:
            raise EmptyFeatureBufferError("convolution asked to read an empty feature buffer")
        src = fb.read()
    else:
        src = x.array()
    if flags.is_FC_layer:
        wt = _squeeze_to(w.array(), 2, "FC weights")
        vec = src.reshape(-1)
        if wt.shape[1] != vec.size:
            raise ShapeError(f"FC layer: weights expect {wt.shape[1]} inputs, got {vec.size}")
        out = wt @ vec
    else:
        arr = _squeeze_to(src, 3, "convolution input")
        wt = _squeeze_to(w.array(), 4, "convolution weights")
        out = _conv2d_same(arr, wt)
    if flags.with_ReLU:
        out = np.maximum(out, 0)
    _deliver(out, y, flags.store_output_to_buffer, fb)


def maxpool(y: BlockView, store_output_to_buffer: bool, fb: FeatureBuffer | None) -> None:
    """2x2 stride-2 max pooling per channel; always reads the feature buffer."""
    if fb is None or not fb.valid:
        raise EmptyFeatureBufferError("maxpool reads the feature buffer, which is empty")
    arr = _squeeze_to(fb.read(), 3, "maxpool input")
    h, w, c = arr.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool: spatial extents must be even, got {arr.shape}")
    pooled = arr.reshape(h // 2, 2, w // 2, 2, c).max(axis=(1, 3))
    _deliver(pooled, y, store_output_to_buffer, fb)
