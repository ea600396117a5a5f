"""Convolutional layer shapes and their derived zero-space dimensions.

Backpropagating a stride-S convolution works on a virtual "zero-spaced"
view of the output loss: S-1 zero rows/columns interleaved between loss
pixels (zero-insertion), a band of k-1-p zeros around the result
(zero-padding), and, when the forward pass discarded trailing input
rows/columns (non-zero stride remainder), an extra all-zero band at the
bottom/right so the transposed convolution reconstructs the full input
extent.  This module owns every raw and derived dimension of that view.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


class InvalidGeometry(ValueError):
    """A layer configuration violates a shape constraint."""


@dataclass(frozen=True)
class LayerGeometry:
    """Raw convolution shape plus every derived backprop dimension.

    Immutable after construction; build instances through :func:`derive`.
    """

    batch: int
    in_ch: int
    in_h: int
    in_w: int
    out_ch: int
    k_h: int
    k_w: int
    stride: int
    pad_h: int
    pad_w: int
    # derived, populated by derive()
    out_h: int
    out_w: int
    ins_h: int  # output span after zero-insertion
    ins_w: int
    full_h: int  # insertion span plus both padding bands
    full_w: int
    rem_h: int  # stride remainder, appended as an all-zero band
    rem_w: int

    @property
    def edge_h(self) -> int:
        """Thickness of the top/bottom zero-padding band (k_h - 1 - pad_h)."""
        return self.k_h - 1 - self.pad_h

    @property
    def edge_w(self) -> int:
        return self.k_w - 1 - self.pad_w

    @property
    def map_h(self) -> int:
        """Height of the materialized loss map, remainder band included."""
        return self.full_h + self.rem_h

    @property
    def map_w(self) -> int:
        return self.full_w + self.rem_w

    @property
    def in_px(self) -> int:
        return self.in_h * self.in_w

    @property
    def out_px(self) -> int:
        return self.out_h * self.out_w

    @property
    def ins_px(self) -> int:
        return self.ins_h * self.ins_w

    @property
    def map_px(self) -> int:
        return self.map_h * self.map_w

    @property
    def k_px(self) -> int:
        return self.k_h * self.k_w


def derive(
    batch: int,
    in_ch: int,
    in_h: int,
    in_w: int,
    out_ch: int,
    k_h: int,
    k_w: int,
    stride: int,
    pad_h: int = 0,
    pad_w: int = 0,
) -> LayerGeometry:
    """Validate a raw layer shape and compute all derived dimensions.

    Raises :class:`InvalidGeometry` naming the violated constraint.
    """
    for name, val in (
        ("batch", batch), ("in_ch", in_ch), ("in_h", in_h), ("in_w", in_w),
        ("out_ch", out_ch), ("k_h", k_h), ("k_w", k_w), ("stride", stride),
    ):
        if val < 1:
            raise InvalidGeometry(f"{name} must be positive, got {val}")
    for name, val in (("pad_h", pad_h), ("pad_w", pad_w)):
        if val < 0:
            raise InvalidGeometry(f"{name} must be non-negative, got {val}")
    if k_h - 1 - pad_h < 0:
        raise InvalidGeometry(f"pad_h={pad_h} exceeds k_h-1={k_h - 1}")
    if k_w - 1 - pad_w < 0:
        raise InvalidGeometry(f"pad_w={pad_w} exceeds k_w-1={k_w - 1}")
    if in_h + 2 * pad_h < k_h:
        raise InvalidGeometry(f"in_h+2*pad_h={in_h + 2 * pad_h} < k_h={k_h}: no valid window")
    if in_w + 2 * pad_w < k_w:
        raise InvalidGeometry(f"in_w+2*pad_w={in_w + 2 * pad_w} < k_w={k_w}: no valid window")

    out_h = (in_h + 2 * pad_h - k_h) // stride + 1
    out_w = (in_w + 2 * pad_w - k_w) // stride + 1
    return LayerGeometry(
        batch=batch, in_ch=in_ch, in_h=in_h, in_w=in_w, out_ch=out_ch,
        k_h=k_h, k_w=k_w, stride=stride, pad_h=pad_h, pad_w=pad_w,
        out_h=out_h,
        out_w=out_w,
        ins_h=out_h + (out_h - 1) * (stride - 1),
        ins_w=out_w + (out_w - 1) * (stride - 1),
        full_h=out_h + 2 * (k_h - 1 - pad_h) + (out_h - 1) * (stride - 1),
        full_w=out_w + 2 * (k_w - 1 - pad_w) + (out_w - 1) * (stride - 1),
        rem_h=(in_h + 2 * pad_h - k_h) % stride,
        rem_w=(in_w + 2 * pad_w - k_w) % stride,
    )


# JSON ingestion.  One object per layer:
#   {"name", "B", "C", "H_i", "W_i", "N", "K_h", "K_w", "S", "P_h", "P_w"}
# Square shorthand keys "H", "K", "P" expand to both axes.

_SQUARE_KEYS = {"H": ("H_i", "W_i"), "K": ("K_h", "K_w"), "P": ("P_h", "P_w")}


def geometry_from_dict(obj: dict, default_batch: int | None = None) -> tuple[str, LayerGeometry]:
    """Build a named geometry from one JSON layer object."""
    d = dict(obj)
    for short, (kh, kw) in _SQUARE_KEYS.items():
        if short in d:
            val = d.pop(short)
            d.setdefault(kh, val)
            d.setdefault(kw, val)
    name = d.pop("name", "")
    d.pop("network", None)
    if "B" not in d and default_batch is not None:
        d["B"] = default_batch
    try:
        g = derive(
            batch=int(d.pop("B")),
            in_ch=int(d.pop("C")),
            in_h=int(d.pop("H_i")),
            in_w=int(d.pop("W_i")),
            out_ch=int(d.pop("N")),
            k_h=int(d.pop("K_h")),
            k_w=int(d.pop("K_w")),
            stride=int(d.pop("S")),
            pad_h=int(d.pop("P_h", 0)),
            pad_w=int(d.pop("P_w", 0)),
        )
    except KeyError as exc:
        raise InvalidGeometry(f"layer object missing key {exc}") from None
    if d:
        raise InvalidGeometry(f"unknown layer keys: {sorted(d)}")
    if not name:
        name = f"{g.in_h}/{g.in_ch}/{g.out_ch}/{g.k_h}/{g.stride}/{g.pad_h}"
    return name, g


def load_layers(text: str, default_batch: int | None = None) -> list[tuple[str, LayerGeometry]]:
    """Parse a JSON string holding one layer object or a list of them."""
    data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    return [geometry_from_dict(obj, default_batch) for obj in data]


def parse_layer_string(spec: str, batch: int = 2) -> LayerGeometry:
    """Parse the square shorthand ``H/C/N/K/S/P`` used on the command line."""
    parts = spec.split("/")
    if len(parts) != 6:
        raise InvalidGeometry(f"expected H/C/N/K/S/P, got {spec!r}")
    try:
        h, c, n, k, s, p = (int(t) for t in parts)
    except ValueError:
        raise InvalidGeometry(f"non-integer field in {spec!r}") from None
    return derive(batch=batch, in_ch=c, in_h=h, in_w=h, out_ch=n,
                  k_h=k, k_w=k, stride=s, pad_h=p, pad_w=p)
