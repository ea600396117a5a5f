"""Layer catalog, sparsity analytics, and cross-algorithm aggregation.

The built-in catalog carries a core set of five stride-2 downsampling
shapes evaluated at batch 2, plus the stride>=2 convolutions of several
well-known CNNs.  Only the three core networks are documented by name in
our comparison baseline; the remaining stand-ins (vgg16, googlenet,
mobilenetv1) are standard published architectures included to round out
the sweep and are not authoritative.  Depthwise/grouped convolutions are
out of scope, so mobilenetv1 contributes its dense stem convolution only;
vgg16 has no stride>=2 convolutions and therefore never enters backprop
comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import addressing
from .geometry import LayerGeometry, derive
from .reference import Tensor4D
from .simulator import SimReport


class MissingCounterpart(ValueError):
    """A (layer, phase) group lacks one of the two algorithm reports."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    network: str
    in_h: int
    in_w: int
    in_ch: int
    out_ch: int
    k_h: int
    k_w: int
    stride: int
    pad_h: int
    pad_w: int
    batch: int = 2

    def geometry(self, batch: int | None = None) -> LayerGeometry:
        return derive(batch=batch or self.batch, in_ch=self.in_ch,
                      in_h=self.in_h, in_w=self.in_w, out_ch=self.out_ch,
                      k_h=self.k_h, k_w=self.k_w, stride=self.stride,
                      pad_h=self.pad_h, pad_w=self.pad_w)


def _sq(name, net, h, c, n, k, s, p, batch):
    return LayerSpec(name=name, network=net, in_h=h, in_w=h, in_ch=c,
                     out_ch=n, k_h=k, k_w=k, stride=s, pad_h=p, pad_w=p,
                     batch=batch)


def builtin_catalog(batch: int = 2) -> list[LayerSpec]:
    core = [
        ("224/3/64/3/2/0", 224, 3, 64, 3, 2, 0),
        ("112/64/64/3/2/1", 112, 64, 64, 3, 2, 1),
        ("56/256/512/1/2/0", 56, 256, 512, 1, 2, 0),
        ("28/244/244/3/2/1", 28, 244, 244, 3, 2, 1),
        ("14/1024/2048/1/2/0", 14, 1024, 2048, 1, 2, 0),
    ]
    nets = {
        "alexnet": [("alexnet-conv1", 224, 3, 64, 11, 4, 2)],
        "resnet50": [
            ("resnet50-conv1", 224, 3, 64, 7, 2, 3),
            ("resnet50-l2-conv2", 56, 128, 128, 3, 2, 1),
            ("resnet50-l2-down", 56, 256, 512, 1, 2, 0),
            ("resnet50-l3-conv2", 28, 256, 256, 3, 2, 1),
            ("resnet50-l3-down", 28, 512, 1024, 1, 2, 0),
            ("resnet50-l4-conv2", 14, 512, 512, 3, 2, 1),
            ("resnet50-l4-down", 14, 1024, 2048, 1, 2, 0),
        ],
        "squeezenet": [("squeezenet-conv1", 224, 3, 96, 7, 2, 0)],
        "googlenet": [("googlenet-conv1", 224, 3, 64, 7, 2, 3)],
        "mobilenetv1": [("mobilenetv1-conv1", 224, 3, 32, 3, 2, 1)],
        "vgg16": [
            ("vgg16-conv1_1", 224, 3, 64, 3, 1, 1),
            ("vgg16-conv2_1", 112, 64, 128, 3, 1, 1),
        ],
    }
    out = [_sq(name, "core", *rest, batch) for name, *rest in core]
    for net, layers in nets.items():
        out += [_sq(name, net, *rest, batch) for name, *rest in layers]
    return out


def stride2_catalog(batch: int = 2) -> list[LayerSpec]:
    """The backprop comparison set: stride >= 2 layers only."""
    return [s for s in builtin_catalog(batch) if s.stride >= 2]


def sparsity_report(g: LayerGeometry) -> dict:
    """Exact structural-zero fractions of the backprop operands."""
    rows, cols = addressing.transposed_matrix_shape(g)
    nz = addressing.transposed_nonzero_count(g)
    return {
        "loss_operand_sparsity": 1.0 - g.out_px / g.map_px,
        "grad_operand_sparsity": 1.0 - g.out_px / g.ins_px,
        "lowered_matrix_sparsity": {
            "loss": 1.0 - nz / (rows * cols),
            "gradient": 1.0 - g.out_px / g.ins_px,
        },
    }


def synth_operands(g: LayerGeometry, seed: int = 42) -> dict:
    """Seeded small-integer tensors; float32 accumulation stays exact."""
    rng = np.random.default_rng(seed)

    def tensor(*shape):
        return Tensor4D(rng.integers(-3, 4, size=shape).astype(np.float32))

    return {
        "input": tensor(g.batch, g.in_ch, g.in_h, g.in_w),
        "kernel": tensor(g.out_ch, g.in_ch, g.k_h, g.k_w),
        "d_out": tensor(g.batch, g.out_ch, g.out_h, g.out_w),
    }


_PHASE_PORT = {"inference": "buf_b_to_pe", "loss": "buf_b_to_pe",
               "gradient": "buf_a_to_pe"}


def _digest(r: SimReport) -> dict:
    return {
        "total_cycles": r.total_cycles,
        "compute_cycles": r.compute_cycles,
        "reorg_cycles": r.reorg_cycles,
        "prologue_cycles": r.prologue_cycles,
        "offchip_total": r.offchip_total,
        "buf_a_to_pe": r.onchip_bytes["buf_a_to_pe"],
        "buf_b_to_pe": r.onchip_bytes["buf_b_to_pe"],
    }


@dataclass(frozen=True)
class ComparisonRow:
    layer: str
    network: str
    phase: str
    sparsity: float
    speedup: float
    onchip_reduction: float
    offchip_reduction: float
    traditional: dict = field(repr=False, default_factory=dict)
    bp: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if self.speedup <= 0:
            raise ValueError(f"speedup must be positive, got {self.speedup}")


def compare(trad: SimReport, bp: SimReport) -> ComparisonRow:
    port = _PHASE_PORT[trad.phase]
    trad_port = trad.onchip_bytes[port]
    return ComparisonRow(
        layer=trad.layer,
        network=trad.network,
        phase=trad.phase,
        sparsity=trad.lowered_sparsity,
        speedup=trad.total_cycles / bp.total_cycles,
        onchip_reduction=1.0 - bp.onchip_bytes[port] / trad_port if trad_port else 0.0,
        offchip_reduction=1.0 - bp.offchip_total / trad.offchip_total,
        traditional=_digest(trad),
        bp=_digest(bp),
    )


def _gmean(values: list[float]) -> float:
    if not values:
        return float("nan")
    if any(v <= 0.0 for v in values):
        return 0.0
    return math.exp(sum(math.log(v) for v in values) / len(values))


def aggregate(reports: list[SimReport]) -> tuple[list[ComparisonRow], dict]:
    """Pair per-(layer, phase) reports across algorithms and summarize.

    Returns the comparison rows (sorted, so the result is independent of
    input order) and per-network geometric means of speedups and
    reduction ratios.
    """
    groups: dict[tuple[str, str], dict[str, SimReport]] = {}
    for r in reports:
        groups.setdefault((r.layer, r.phase), {})[r.algo] = r
    rows = []
    for key in sorted(groups):
        pair = groups[key]
        if "traditional" not in pair or "bp" not in pair:
            raise MissingCounterpart(f"layer/phase {key} has only {sorted(pair)}")
        rows.append(compare(pair["traditional"], pair["bp"]))

    nets: dict[str, list[ComparisonRow]] = {}
    for row in rows:
        nets.setdefault(row.network or "unknown", []).append(row)
    summary = {}
    for net in sorted(nets):
        rs = nets[net]
        summary[net] = {
            "layers": len({r.layer for r in rs}),
            "speedup_gmean": _gmean([r.speedup for r in rs]),
            "onchip_reduction_gmean": _gmean([r.onchip_reduction for r in rs]),
            "offchip_reduction_gmean": _gmean([r.offchip_reduction for r in rs]),
            "mean_sparsity": sum(r.sparsity for r in rs) / len(rs),
        }
    overall = {
        "speedup_gmean": _gmean([r.speedup for r in rows]),
        "onchip_reduction_gmean": _gmean([r.onchip_reduction for r in rows]),
        "offchip_reduction_gmean": _gmean([r.offchip_reduction for r in rows]),
    }
    return rows, {"networks": summary, "overall": overall}
