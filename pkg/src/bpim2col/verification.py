"""Randomized verification drives: implicit-vs-explicit equivalence,
backprop GEMM equality, and finite-difference gradient checks.

The equivalence check compares, for every element of both virtual
matrices, the address computed by the mapping arithmetic against an index
oracle built purely by explicit materialization (scatter + patch unroll).
Geometry draws cover dims <= 32, stride 1..4, kernels 1..7, pads up to
k-1, batch <= 3, channels <= 8.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import addressing, reference, simulator
from .geometry import LayerGeometry, derive
from .workloads import synth_operands


def random_geometry(rng: np.random.Generator, max_hw: int = 32, max_b: int = 3,
                    max_ch: int = 8, max_k: int = 7, max_s: int = 4) -> LayerGeometry:
    k_h = int(rng.integers(1, max_k + 1))
    k_w = int(rng.integers(1, max_k + 1))
    pad_h = int(rng.integers(0, k_h))
    pad_w = int(rng.integers(0, k_w))
    in_h = int(rng.integers(max(1, k_h - 2 * pad_h), max_hw + 1))
    in_w = int(rng.integers(max(1, k_w - 2 * pad_w), max_hw + 1))
    return derive(
        batch=int(rng.integers(1, max_b + 1)),
        in_ch=int(rng.integers(1, max_ch + 1)),
        in_h=in_h, in_w=in_w,
        out_ch=int(rng.integers(1, max_ch + 1)),
        k_h=k_h, k_w=k_w,
        stride=int(rng.integers(1, max_s + 1)),
        pad_h=pad_h, pad_w=pad_w,
    )


@dataclass
class VerificationResult:
    ok: bool = True
    cases_run: int = 0
    lines: list[str] = field(default_factory=list)
    counterexample: dict | None = None

    def fail(self, message: str, ctx: dict) -> None:
        self.ok = False
        self.lines.append(f"FAIL {message}")
        if self.counterexample is None:
            self.counterexample = ctx


def _geometry_dict(g: LayerGeometry) -> dict:
    return {
        "B": g.batch, "C": g.in_ch, "H_i": g.in_h, "W_i": g.in_w,
        "N": g.out_ch, "K_h": g.k_h, "K_w": g.k_w, "S": g.stride,
        "P_h": g.pad_h, "P_w": g.pad_w,
    }


def check_equivalence(g: LayerGeometry, res: VerificationResult) -> None:
    """Full-matrix comparison of both mapping modes against the oracle."""
    t_rows, t_cols = addressing.transposed_matrix_shape(g)
    got = addressing.transposed_block_indices(g, 0, t_rows, 0, t_cols)
    want = reference.transposed_matrix_source_indices(g)
    if not np.array_equal(got, want):
        r, c = np.argwhere(got != want)[0]
        res.fail(
            f"transposed map disagrees at row={r} col={c} "
            f"(addr={r * t_cols + c}): got {got[r, c]}, oracle {want[r, c]}",
            {"geometry": _geometry_dict(g), "mode": "transposed",
             "row": int(r), "col": int(c), "addr": int(r * t_cols + c)})
        return

    d_rows, d_cols = addressing.dilated_matrix_shape(g)
    got = addressing.dilated_block_indices(g, 0, d_rows, 0, d_cols)
    want = reference.dilated_matrix_source_indices(g)
    if not np.array_equal(got, want):
        r, c = np.argwhere(got != want)[0]
        res.fail(
            f"dilated map disagrees at row={r} col={c} "
            f"(addr={r * d_cols + c}): got {got[r, c]}, oracle {want[r, c]}",
            {"geometry": _geometry_dict(g), "mode": "dilated",
             "row": int(r), "col": int(c), "addr": int(r * d_cols + c)})


def check_backprop(g: LayerGeometry, seed: int, res: VerificationResult) -> None:
    """Datapath results of both algorithms must equal the oracle exactly."""
    ops = synth_operands(g, seed)
    for phase, ref_fn in (
        ("loss", lambda: reference.loss_backward_ref(ops["d_out"], ops["kernel"], g)),
        ("gradient", lambda: reference.gradient_backward_ref(ops["input"], ops["d_out"], g)),
    ):
        want = ref_fn().data
        checksums = set()
        for algo in simulator.ALGOS:
            rep, got = simulator.run_gemm(phase, algo, g, ops)
            checksums.add(rep.checksum)
            if not np.array_equal(got.data, want):
                res.fail(f"{phase}/{algo} datapath differs from oracle",
                         {"geometry": _geometry_dict(g), "phase": phase, "algo": algo})
                return
        if len(checksums) != 1:
            res.fail(f"{phase}: algorithms disagree",
                     {"geometry": _geometry_dict(g), "phase": phase})


def check_finite_difference(g: LayerGeometry, seed: int, res: VerificationResult,
                            rel_tol: float = 1e-3, samples: int = 4) -> None:
    """Central differences of L = sum(conv)^2/2 against both backward ops.

    The loss is quadratic in each element, so a half-unit step keeps the
    check exact up to float32 rounding.
    """
    rng = np.random.default_rng(seed)
    ops = synth_operands(g, seed)
    x, w = ops["input"], ops["kernel"]
    y = reference.conv_forward(x, w, g)
    dx = reference.loss_backward_ref(y, w, g)
    dw = reference.gradient_backward_ref(x, y, g)
    eps = 0.5

    def loss_of(xt, wt):
        out = reference.conv_forward(xt, wt, g).data.astype(np.float64)
        return 0.5 * float((out * out).sum())

    for tensor, grad, role in ((x, dx, "input"), (w, dw, "kernel")):
        flat_n = tensor.data.size
        for _ in range(samples):
            i = int(rng.integers(flat_n))
            bumped = tensor.data.copy().reshape(-1)
            bumped[i] += eps
            plus = loss_of(reference.Tensor4D(bumped.reshape(tensor.dims)), w) \
                if role == "input" else loss_of(x, reference.Tensor4D(bumped.reshape(tensor.dims)))
            bumped[i] -= 2 * eps
            minus = loss_of(reference.Tensor4D(bumped.reshape(tensor.dims)), w) \
                if role == "input" else loss_of(x, reference.Tensor4D(bumped.reshape(tensor.dims)))
            fd = (plus - minus) / (2 * eps)
            an = float(grad.flat[i])
            scale = max(abs(fd), abs(an), 1.0)
            if abs(fd - an) / scale > rel_tol:
                res.fail(f"finite difference mismatch on {role}[{i}]: fd={fd}, analytic={an}",
                         {"geometry": _geometry_dict(g), "role": role, "element": i})
                return


def run_verification(seed: int = 42, cases: int = 1000) -> VerificationResult:
    """The full randomized suite the ``verify`` command runs."""
    res = VerificationResult()
    if cases <= 0:
        res.lines.append("no cases run")
        return res
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        g = random_geometry(rng)
        res.cases_run += 1
        check_equivalence(g, res)
        if not res.ok:
            return res
    res.lines.append(f"equivalence: {cases} geometries, both modes exact")

    small_rng = np.random.default_rng(seed + 1)
    n_small = min(cases, 20)
    for i in range(n_small):
        g = random_geometry(small_rng, max_hw=12, max_ch=4)
        check_backprop(g, seed + i, res)
        if not res.ok:
            return res
    res.lines.append(f"backprop: {n_small} geometries, datapath equals oracle exactly")

    fd_rng = np.random.default_rng(seed + 2)
    n_fd = min(cases, 5)
    for i in range(n_fd):
        g = random_geometry(fd_rng, max_hw=6, max_ch=3, max_k=3, max_b=2)
        check_finite_difference(g, seed + 100 + i, res)
        if not res.ok:
            return res
    res.lines.append(f"finite differences: {n_fd} geometries within 1e-3 relative")
    return res
