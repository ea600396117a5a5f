"""Implicit lowering of backprop convolutions by virtual->physical mapping.

Instead of materializing the zero-spaced operands, the lowered matrices
exist only as coordinate spaces; every element is answered on demand:

* transposed mode (input-loss path): the stationary matrix has rows
  (n, h_k, w_k) and columns (b, out_h, out_w).  A row/column pair lands on
  pixel (h, w) = (out_h + h_k, out_w + w_k) of the virtual zero-spaced
  loss map.  The pixel is a structural zero when it falls in the
  upper/left padding band (area 0), off the insertion grid, or past the
  last stored loss pixel (area 1, which also covers the bottom/right
  padding and the stride-remainder band); otherwise it maps to one stored
  element of the output loss.

* dilated mode (kernel-gradient path): the dynamic matrix is simply the
  channel-transposed zero-inserted output loss flattened to rows n and
  columns (b, h, w).  A cell is zero unless both coordinates sit on the
  insertion grid, in which case it maps to stored element (h/S, w/S).

Scalar entry points mirror the per-address hardware units; the
``*_block_indices`` functions are the vectorized equivalents used by the
simulator datapath and the verification suites (-1 marks a zero).
Sixteen-lane gathers model the buffer interface: transposed-mode tiles
carry one non-zero mask per row, dilated-mode rows compress to bursts
holding only the first physical address because non-zero elements within
one virtual row are stored consecutively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import LayerGeometry
from .reference import Tensor4D

AddressMapResult = int | None
"""Flat offset into the physically stored tensor, or None for a structural zero."""

LANES = 16


class OutOfRange(IndexError):
    """A virtual matrix address lies outside the matrix."""


@dataclass(frozen=True)
class CompressedBurst:
    """Base physical address plus a 16-bit lane mask for one fetch group.

    Bit i of ``mask`` is set iff lane i carries a non-zero element; the
    lowest set bit maps to ``base`` and the remaining set bits to the
    following consecutive physical offsets.
    """

    base: int
    mask: int
    count: int

    def __post_init__(self):
        if not 0 <= self.mask < (1 << LANES):
            raise ValueError(f"mask {self.mask:#x} exceeds {LANES} lanes")
        if self.count != self.mask.bit_count():
            raise ValueError(f"count {self.count} != popcount({self.mask:#x})")


def transposed_matrix_shape(g: LayerGeometry) -> tuple[int, int]:
    return (g.out_ch * g.k_px, g.batch * g.in_px)


def dilated_matrix_shape(g: LayerGeometry) -> tuple[int, int]:
    return (g.out_ch, g.batch * g.ins_px)


# NZ detection, transposed mode.

def in_area0_transposed(h: int, w: int, g: LayerGeometry) -> bool:
    """Upper/left zero-padding band of the virtual loss map."""
    return h < g.edge_h or w < g.edge_w


def in_area1_transposed(h: int, w: int, g: LayerGeometry) -> bool:
    """Every other structural zero: off-grid pixels plus positions whose
    grid index runs past the stored loss extent (bottom/right padding and
    the remainder band).  Callers ensure area 0 was excluded first."""
    dh = h - g.edge_h
    dw = w - g.edge_w
    if dh % g.stride > 0 or dw % g.stride > 0:
        return True
    return dh // g.stride >= g.out_h or dw // g.stride >= g.out_w


def map_transposed_rc(row: int, col: int, g: LayerGeometry) -> AddressMapResult:
    """Map one stationary-matrix element (row, col) to its stored offset."""
    rows, cols = transposed_matrix_shape(g)
    if not (0 <= row < rows and 0 <= col < cols):
        raise OutOfRange(f"({row}, {col}) outside {rows}x{cols} matrix")
    b, temp1, w_k = col // g.in_px, row // g.k_w, row % g.k_w
    n, h_k, temp2 = temp1 // g.k_h, temp1 % g.k_h, col % g.in_px
    h, w = temp2 // g.in_w + h_k, temp2 % g.in_w + w_k
    if in_area0_transposed(h, w, g) or in_area1_transposed(h, w, g):
        return None
    hq = (h - g.edge_h) // g.stride
    wq = (w - g.edge_w) // g.stride
    return ((b * g.out_ch + n) * g.out_h + hq) * g.out_w + wq


def map_transposed(addr_in: int, g: LayerGeometry) -> AddressMapResult:
    """Flat-address entry point; addr_in = row * (B*in_px) + col."""
    rows, cols = transposed_matrix_shape(g)
    if not 0 <= addr_in < rows * cols:
        raise OutOfRange(f"addr {addr_in} outside matrix of {rows * cols} elements")
    return map_transposed_rc(addr_in // cols, addr_in % cols, g)


# NZ detection, dilated mode.

def in_zero_dilated(h: int, w: int, g: LayerGeometry) -> bool:
    """True iff (h, w) falls between insertion-grid points."""
    return h % g.stride > 0 or w % g.stride > 0


def map_dilated_rc(row: int, col: int, g: LayerGeometry) -> AddressMapResult:
    rows, cols = dilated_matrix_shape(g)
    if not (0 <= row < rows and 0 <= col < cols):
        raise OutOfRange(f"({row}, {col}) outside {rows}x{cols} matrix")
    temp, w = col // g.ins_w, col % g.ins_w
    b, h = temp // g.ins_h, temp % g.ins_h
    if in_zero_dilated(h, w, g):
        return None
    return ((b * g.out_ch + row) * g.out_h + h // g.stride) * g.out_w + w // g.stride


def map_dilated(addr_in: int, g: LayerGeometry) -> AddressMapResult:
    rows, cols = dilated_matrix_shape(g)
    if not 0 <= addr_in < rows * cols:
        raise OutOfRange(f"addr {addr_in} outside matrix of {rows * cols} elements")
    return map_dilated_rc(addr_in // cols, addr_in % cols, g)


# Vectorized block builders.  Each returns int64 physical offsets with -1
# marking structural zeros, for rows [row0, row1) x columns [col0, col1).

def _check_block(g, row0, row1, col0, col1, shape):
    rows, cols = shape
    if not (0 <= row0 <= row1 <= rows and 0 <= col0 <= col1 <= cols):
        raise OutOfRange(f"block [{row0}:{row1}, {col0}:{col1}] outside {rows}x{cols}")


def transposed_block_indices(g: LayerGeometry, row0: int, row1: int,
                             col0: int, col1: int) -> np.ndarray:
    _check_block(g, row0, row1, col0, col1, transposed_matrix_shape(g))
    rows = np.arange(row0, row1, dtype=np.int64)[:, None]
    cols = np.arange(col0, col1, dtype=np.int64)[None, :]
    b = cols // g.in_px
    temp1 = rows // g.k_w
    w_k = rows % g.k_w
    n = temp1 // g.k_h
    h_k = temp1 % g.k_h
    temp2 = cols % g.in_px
    dh = temp2 // g.in_w + h_k - g.edge_h
    dw = temp2 % g.in_w + w_k - g.edge_w
    hq = dh // g.stride
    wq = dw // g.stride
    zero = (dh < 0) | (dw < 0) | (dh % g.stride > 0) | (dw % g.stride > 0) \
        | (hq >= g.out_h) | (wq >= g.out_w)
    phys = ((b * g.out_ch + n) * g.out_h + hq) * g.out_w + wq
    return np.where(zero, np.int64(-1), phys)


def dilated_block_indices(g: LayerGeometry, row0: int, row1: int,
                          col0: int, col1: int) -> np.ndarray:
    _check_block(g, row0, row1, col0, col1, dilated_matrix_shape(g))
    n = np.arange(row0, row1, dtype=np.int64)[:, None]
    cols = np.arange(col0, col1, dtype=np.int64)[None, :]
    temp = cols // g.ins_w
    w = cols % g.ins_w
    b = temp // g.ins_h
    h = temp % g.ins_h
    zero = (h % g.stride > 0) | (w % g.stride > 0)
    phys = ((b * g.out_ch + n) * g.out_h + h // g.stride) * g.out_w + w // g.stride
    return np.where(zero, np.int64(-1), phys)


def inference_block_indices(g: LayerGeometry, row0: int, row1: int,
                            col0: int, col1: int) -> np.ndarray:
    """Standard implicit lowering of the padded input: rows (c, u, v),
    columns (b, p, q); -1 where the window hangs over the padding."""
    shape = (g.in_ch * g.k_px, g.batch * g.out_px)
    _check_block(g, row0, row1, col0, col1, shape)
    rows = np.arange(row0, row1, dtype=np.int64)[:, None]
    cols = np.arange(col0, col1, dtype=np.int64)[None, :]
    c = rows // g.k_px
    u = (rows // g.k_w) % g.k_h
    v = rows % g.k_w
    b = cols // g.out_px
    p = (cols % g.out_px) // g.out_w
    q = cols % g.out_w
    ih = p * g.stride + u - g.pad_h
    iw = q * g.stride + v - g.pad_w
    zero = (ih < 0) | (ih >= g.in_h) | (iw < 0) | (iw >= g.in_w)
    phys = ((b * g.in_ch + c) * g.in_h + ih) * g.in_w + iw
    return np.where(zero, np.int64(-1), phys)


def grad_stationary_block_indices(g: LayerGeometry, row0: int, row1: int,
                                  col0: int, col1: int) -> np.ndarray:
    """Lowered channel-transposed padded input for the gradient pass:
    rows (b, h, w) over the zero-inserted span, columns (c, u, v)."""
    shape = (g.batch * g.ins_px, g.in_ch * g.k_px)
    _check_block(g, row0, row1, col0, col1, shape)
    rows = np.arange(row0, row1, dtype=np.int64)[:, None]
    cols = np.arange(col0, col1, dtype=np.int64)[None, :]
    b = rows // g.ins_px
    h = (rows % g.ins_px) // g.ins_w
    w = rows % g.ins_w
    c = cols // g.k_px
    u = (cols // g.k_w) % g.k_h
    v = cols % g.k_w
    ih = h + u - g.pad_h
    iw = w + v - g.pad_w
    zero = (ih < 0) | (ih >= g.in_h) | (iw < 0) | (iw >= g.in_w)
    phys = ((b * g.in_ch + c) * g.in_h + ih) * g.in_w + iw
    return np.where(zero, np.int64(-1), phys)


def gather_values(idx: np.ndarray, flat_source: np.ndarray) -> np.ndarray:
    """Fetch mapped elements, filling structural zeros."""
    vals = flat_source[np.clip(idx, 0, None)]
    return np.where(idx >= 0, vals, np.float32(0.0)).astype(np.float32, copy=False)


def gather_tile_transposed(row_base: int, col_base: int, g: LayerGeometry,
                           source: Tensor4D) -> tuple[np.ndarray, np.ndarray]:
    """One 16x16 stationary tile plus a non-zero lane mask per row.

    Lanes that hang over the matrix edge are zero-filled with their mask
    bits clear, exactly like structural zeros.
    """
    rows, cols = transposed_matrix_shape(g)
    if not (0 <= row_base < rows and 0 <= col_base < cols):
        raise OutOfRange(f"tile origin ({row_base}, {col_base}) outside matrix")
    r1 = min(row_base + LANES, rows)
    c1 = min(col_base + LANES, cols)
    idx = np.full((LANES, LANES), -1, dtype=np.int64)
    idx[:r1 - row_base, :c1 - col_base] = \
        transposed_block_indices(g, row_base, r1, col_base, c1)
    tile = gather_values(idx, source.flat)
    masks = ((idx >= 0) << np.arange(LANES, dtype=np.uint32)[None, :]).sum(axis=1)
    return tile, masks.astype(np.uint32)


def gather_row_dilated(row: int, col_base: int, g: LayerGeometry,
                       source: Tensor4D) -> tuple[list[CompressedBurst], np.ndarray]:
    """Sixteen dynamic-matrix lanes starting at an aligned column.

    Returns the compressed bursts covering the non-zero lanes plus the 16
    recovered scalars.  A fetch group is split wherever the lanes cross
    into the next virtual (b, h) row, so that each burst's non-zero lanes
    are guaranteed consecutive in physical storage.
    """
    rows, cols = dilated_matrix_shape(g)
    if not 0 <= row < rows:
        raise OutOfRange(f"row {row} outside {rows}-row matrix")
    if not 0 <= col_base < cols:
        raise OutOfRange(f"col_base {col_base} outside {cols}-column matrix")
    if col_base % LANES:
        raise OutOfRange(f"col_base {col_base} not aligned to {LANES}")
    c1 = min(col_base + LANES, cols)
    width = c1 - col_base
    idx = np.full(LANES, -1, dtype=np.int64)
    idx[:width] = dilated_block_indices(g, row, row + 1, col_base, c1)[0]
    vrow = (col_base + np.arange(width, dtype=np.int64)) // g.ins_w

    bursts: list[CompressedBurst] = []
    lane = 0
    while lane < width:
        seg_end = lane
        while seg_end < width and vrow[seg_end] == vrow[lane]:
            seg_end += 1
        seg_idx = idx[lane:seg_end]
        nz = np.flatnonzero(seg_idx >= 0)
        if nz.size:
            phys = seg_idx[nz]
            if not np.array_equal(phys, phys[0] + np.arange(nz.size)):
                raise AssertionError(f"non-consecutive burst at row {row}, "
                                     f"cols {col_base + lane}..{col_base + seg_end}")
            mask = int(((1 << (nz + lane)).sum()))
            bursts.append(CompressedBurst(base=int(phys[0]), mask=mask, count=int(nz.size)))
        lane = seg_end
    return bursts, gather_values(idx, source.flat)


# Exact structural-zero counts, closed form.  These are what the traffic
# model uses at full layer scale, where materializing index matrices is
# not an option; tests pin them against the materialization oracle.

def transposed_nonzero_count(g: LayerGeometry) -> int:
    """Non-zero elements of the full transposed-mode stationary matrix."""
    def axis_counts(k, edge, extent, out):
        total = 0
        grid = np.arange(out, dtype=np.int64) * g.stride + edge
        for kk in range(k):
            pos = grid - kk
            total += int(((pos >= 0) & (pos < extent)).sum())
        return total
    cnt_h = axis_counts(g.k_h, g.edge_h, g.in_h, g.out_h)
    cnt_w = axis_counts(g.k_w, g.edge_w, g.in_w, g.out_w)
    return g.out_ch * g.batch * cnt_h * cnt_w


def _valid_window_pairs(k, pad, extent, positions, step):
    total = 0
    pos = np.arange(positions, dtype=np.int64) * step - pad
    for u in range(k):
        p = pos + u
        total += int(((p >= 0) & (p < extent)).sum())
    return total


def inference_nonpad_count(g: LayerGeometry) -> int:
    """Elements of the lowered padded input that read stored data."""
    cnt_h = _valid_window_pairs(g.k_h, g.pad_h, g.in_h, g.out_h, g.stride)
    cnt_w = _valid_window_pairs(g.k_w, g.pad_w, g.in_w, g.out_w, g.stride)
    return g.batch * g.in_ch * cnt_h * cnt_w


def grad_stationary_nonpad_count(g: LayerGeometry) -> int:
    cnt_h = _valid_window_pairs(g.k_h, g.pad_h, g.in_h, g.ins_h, 1)
    cnt_w = _valid_window_pairs(g.k_w, g.pad_w, g.in_w, g.ins_w, 1)
    return g.batch * g.in_ch * cnt_h * cnt_w


def dilated_burst_count(g: LayerGeometry) -> int:
    """Compressed bursts needed to stream the whole dynamic matrix once,
    with 16-lane fetch groups split at virtual (b, h) row boundaries and
    all-zero groups skipped."""
    cols = np.arange(g.batch * g.ins_px, dtype=np.int64)
    t = cols % g.ins_px
    nz = ((t // g.ins_w) % g.stride == 0) & ((t % g.ins_w) % g.stride == 0)
    key = (cols // LANES) * np.int64(cols.size) + cols // g.ins_w
    k = key[nz]
    if k.size == 0:
        return 0
    per_row = 1 + int(np.count_nonzero(np.diff(k)))
    return g.out_ch * per_row
