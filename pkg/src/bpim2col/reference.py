"""Brute-force reference convolutions and explicit zero-space materialization.

Everything here favours clarity over speed and serves as the correctness
oracle for the implicit address-mapping path:

* ``conv_forward``       -- plain strided convolution of the padded input.
* ``loss_backward_ref``  -- input loss via explicit materialization of the
  zero-inserted, zero-padded output loss followed by a stride-1 convolution
  with the per-plane 180-degree-rotated, channel-transposed kernel.
* ``gradient_backward_ref`` -- kernel gradient as the direct windowed sum
  (equivalently a dilated convolution cropped to the kernel extent).
* ``explicit_im2col``    -- materialized lowered matrices for all three modes.
* ``*_source_indices``   -- the same materialization applied to element
  indices instead of values, giving an independent reference for every
  virtual->physical address question (-1 marks a structural zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import LayerGeometry


class ShapeMismatch(ValueError):
    """An operand does not match the shape the geometry prescribes."""


@dataclass(frozen=True)
class Tensor4D:
    """Dense 4-d tensor in (d0, d1, d2, d3) row-major layout.

    The flat element offset of ``[i0, i1, i2, i3]`` is
    ``((i0*d1 + i1)*d2 + i2)*d3 + i3``, which is what every physical
    address produced by the mapping code refers to.
    """

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ShapeMismatch(f"Tensor4D needs 4 dims, got {self.data.ndim}")
        if not self.data.flags.c_contiguous:
            object.__setattr__(self, "data", np.ascontiguousarray(self.data))

    @classmethod
    def wrap(cls, arr) -> "Tensor4D":
        return cls(np.ascontiguousarray(arr, dtype=np.float32))

    @classmethod
    def zeros(cls, d0: int, d1: int, d2: int, d3: int) -> "Tensor4D":
        return cls(np.zeros((d0, d1, d2, d3), dtype=np.float32))

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


def _expect(t: Tensor4D, shape: tuple[int, int, int, int], role: str) -> None:
    if t.dims != shape:
        raise ShapeMismatch(f"{role}: expected {shape}, got {t.dims}")


def _pad_input(x: Tensor4D, g: LayerGeometry) -> np.ndarray:
    return np.pad(x.data, ((0, 0), (0, 0), (g.pad_h, g.pad_h), (g.pad_w, g.pad_w)))


def conv_forward(x: Tensor4D, w: Tensor4D, g: LayerGeometry) -> Tensor4D:
    """Strided convolution: out[b,n,p,q] = sum_{c,u,v} x_pad[b,c,pS+u,qS+v] w[n,c,u,v]."""
    _expect(x, (g.batch, g.in_ch, g.in_h, g.in_w), "input")
    _expect(w, (g.out_ch, g.in_ch, g.k_h, g.k_w), "kernel")
    xp = _pad_input(x, g)
    out = np.zeros((g.batch, g.out_ch, g.out_h, g.out_w), dtype=np.float32)
    s = g.stride
    for u in range(g.k_h):
        for v in range(g.k_w):
            win = xp[:, :, u:u + s * (g.out_h - 1) + 1:s, v:v + s * (g.out_w - 1) + 1:s]
            out += np.einsum("bchw,nc->bnhw", win, w.data[:, :, u, v])
    return Tensor4D(out)


def materialize_loss_operand(dy: Tensor4D, g: LayerGeometry) -> Tensor4D:
    """Explicitly build the zero-spaced view of the output loss.

    Loss pixels land every ``stride`` positions starting at the padding
    band edge; every other cell, including the trailing remainder band,
    stays zero.
    """
    _expect(dy, (g.batch, g.out_ch, g.out_h, g.out_w), "output loss")
    m = np.zeros((g.batch, g.out_ch, g.map_h, g.map_w), dtype=np.float32)
    s = g.stride
    m[:, :,
      g.edge_h:g.edge_h + s * (g.out_h - 1) + 1:s,
      g.edge_w:g.edge_w + s * (g.out_w - 1) + 1:s] = dy.data
    return Tensor4D(m)


def loss_backward_ref(dy: Tensor4D, w: Tensor4D, g: LayerGeometry) -> Tensor4D:
    """Input loss: stride-1 convolution of the materialized loss map with
    the kernel rotated 180 degrees per plane and transposed in (N, C)."""
    _expect(w, (g.out_ch, g.in_ch, g.k_h, g.k_w), "kernel")
    m = materialize_loss_operand(dy, g).data
    wk = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (C, N, k_h, k_w)
    out = np.zeros((g.batch, g.in_ch, g.in_h, g.in_w), dtype=np.float32)
    for u in range(g.k_h):
        for v in range(g.k_w):
            out += np.einsum("bnhw,cn->bchw",
                             m[:, :, u:u + g.in_h, v:v + g.in_w], wk[:, :, u, v])
    return Tensor4D(out)


def gradient_backward_ref(x: Tensor4D, dy: Tensor4D, g: LayerGeometry) -> Tensor4D:
    """Kernel gradient: dW[n,c,u,v] = sum_{b,p,q} x_pad[b,c,pS+u,qS+v] dy[b,n,p,q]."""
    _expect(x, (g.batch, g.in_ch, g.in_h, g.in_w), "input")
    _expect(dy, (g.batch, g.out_ch, g.out_h, g.out_w), "output loss")
    xp = _pad_input(x, g)
    dw = np.zeros((g.out_ch, g.in_ch, g.k_h, g.k_w), dtype=np.float32)
    s = g.stride
    for u in range(g.k_h):
        for v in range(g.k_w):
            win = xp[:, :, u:u + s * (g.out_h - 1) + 1:s, v:v + s * (g.out_w - 1) + 1:s]
            dw[:, :, u, v] = np.einsum("bnpq,bcpq->nc", dy.data, win)
    return Tensor4D(dw)


def _unroll_patches(m: np.ndarray, k_h: int, k_w: int,
                    out_h: int, out_w: int, step: int = 1) -> np.ndarray:
    """Unroll k_h x k_w patches of a (B, CH, H, W) map at the given step
    into a matrix with rows (ch, u, v) and columns (b, oh, ow)."""
    nb, nch = m.shape[:2]
    out = np.empty((nch, k_h, k_w, nb, out_h, out_w), dtype=m.dtype)
    for u in range(k_h):
        for v in range(k_w):
            sl = m[:, :, u:u + step * (out_h - 1) + 1:step,
                   v:v + step * (out_w - 1) + 1:step]
            out[:, u, v] = sl.transpose(1, 0, 2, 3)
    return out.reshape(nch * k_h * k_w, nb * out_h * out_w)


def explicit_im2col(operand: Tensor4D, mode: str, g: LayerGeometry) -> np.ndarray:
    """Materialize the lowered matrix for one of the three convolution modes.

    ``transposed``: the zero-spaced loss map unrolled at stride 1 into the
    stationary matrix, shape (N*k_h*k_w, B*in_h*in_w).
    ``dilated``: the channel-transposed zero-inserted loss flattened into
    the dynamic matrix, shape (N, B*ins_h*ins_w); no patch unrolling.
    ``inference``: standard lowering of the padded input, shape
    (C*k_h*k_w, B*out_h*out_w).
    """
    if mode == "transposed":
        m = materialize_loss_operand(operand, g).data
        return _unroll_patches(m, g.k_h, g.k_w, g.in_h, g.in_w)
    if mode == "dilated":
        _expect(operand, (g.batch, g.out_ch, g.out_h, g.out_w), "output loss")
        v = np.zeros((g.out_ch, g.batch, g.ins_h, g.ins_w), dtype=np.float32)
        v[:, :, ::g.stride, ::g.stride] = operand.data.transpose(1, 0, 2, 3)
        return v.reshape(g.out_ch, g.batch * g.ins_px)
    if mode == "inference":
        _expect(operand, (g.batch, g.in_ch, g.in_h, g.in_w), "input")
        xp = _pad_input(operand, g)
        return _unroll_patches(xp, g.k_h, g.k_w, g.out_h, g.out_w, step=g.stride)
    raise ValueError(f"unknown im2col mode {mode!r}")


# Index-valued twins of the materializations above.  Each cell holds the
# flat offset of the stored element it came from, or -1 for a structural
# zero.  These are built purely by scatter/unroll, with none of the
# modular arithmetic the mapping code uses, so they can referee it.

def loss_map_source_indices(g: LayerGeometry) -> np.ndarray:
    idx = np.full((g.batch, g.out_ch, g.map_h, g.map_w), -1, dtype=np.int64)
    src = np.arange(g.batch * g.out_ch * g.out_px, dtype=np.int64)
    s = g.stride
    idx[:, :,
        g.edge_h:g.edge_h + s * (g.out_h - 1) + 1:s,
        g.edge_w:g.edge_w + s * (g.out_w - 1) + 1:s] = \
        src.reshape(g.batch, g.out_ch, g.out_h, g.out_w)
    return idx


def transposed_matrix_source_indices(g: LayerGeometry) -> np.ndarray:
    return _unroll_patches(loss_map_source_indices(g), g.k_h, g.k_w, g.in_h, g.in_w)


def dilated_matrix_source_indices(g: LayerGeometry) -> np.ndarray:
    v = np.full((g.out_ch, g.batch, g.ins_h, g.ins_w), -1, dtype=np.int64)
    src = np.arange(g.batch * g.out_ch * g.out_px, dtype=np.int64)
    v[:, :, ::g.stride, ::g.stride] = \
        src.reshape(g.batch, g.out_ch, g.out_h, g.out_w).transpose(1, 0, 2, 3)
    return v.reshape(g.out_ch, g.batch * g.ins_px)


def _padded_input_indices(g: LayerGeometry) -> np.ndarray:
    pm = np.full((g.batch, g.in_ch, g.in_h + 2 * g.pad_h, g.in_w + 2 * g.pad_w),
                 -1, dtype=np.int64)
    src = np.arange(g.batch * g.in_ch * g.in_px, dtype=np.int64)
    pm[:, :, g.pad_h:g.pad_h + g.in_h, g.pad_w:g.pad_w + g.in_w] = \
        src.reshape(g.batch, g.in_ch, g.in_h, g.in_w)
    return pm


def inference_matrix_source_indices(g: LayerGeometry) -> np.ndarray:
    return _unroll_patches(_padded_input_indices(g), g.k_h, g.k_w,
                           g.out_h, g.out_w, step=g.stride)


def grad_stationary_source_indices(g: LayerGeometry) -> np.ndarray:
    """Rows (b, h, w) over the zero-inserted span, columns (c, u, v)."""
    pm = _padded_input_indices(g)
    out = np.empty((g.batch, g.ins_h, g.ins_w, g.in_ch, g.k_h, g.k_w), dtype=np.int64)
    for u in range(g.k_h):
        for v in range(g.k_w):
            out[:, :, :, :, u, v] = \
                pm[:, :, u:u + g.ins_h, v:v + g.ins_w].transpose(0, 2, 3, 1)
    return out.reshape(g.batch * g.ins_px, g.in_ch * g.k_px)
