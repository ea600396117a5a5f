"""Deterministic cycle and traffic model of the systolic-array accelerator.

The machine is a square input-stationary PE array (default 16x16) fed by
two double-buffered operand buffers: buffer B holds the stationary lowered
matrix, buffer A streams the dynamic one through skewing FIFOs.  The
implicit-lowering mode generates operand addresses on the fly, skipping
structural zeros at the buffer ports; the traditional mode first has the
host materialize the zero-spaced operand in memory, then lowers it with
the standard address generators.

Cycle model (intentionally simple and fully documented):

* one tile pass streams M dynamic rows through a resident 16x16 stationary
  tile in ``M + 2*(dim-1)`` cycles (skew fill plus drain);
* stationary loads are hidden by double buffering except the very first,
  which costs ``dim`` cycles;
* each address-generation pipeline pays its fill latency (prologue) once
  per run;
* host reorganization (traditional mode only) costs a configurable number
  of cycles per materialized element, with an optional overlap fraction
  hidden under compute, and moves each element once in and once out.

Both algorithms execute the same GEMM over the same tile grid, so their
compute cycles and numeric results are identical by construction; they
differ in prologue, reorganization, and bytes crossing the memory system.
Byte counters assume each resident operand is fetched from off-chip once;
on-chip port counters charge every element that actually crosses into the
array, so zero lanes filled at the PE inputs are free in implicit mode.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field, asdict

import numpy as np

from . import addressing
from .geometry import LayerGeometry
from .reference import (
    ShapeMismatch,
    Tensor4D,
    conv_forward,
    gradient_backward_ref,
    loss_backward_ref,
)

PHASES = ("inference", "loss", "gradient")
ALGOS = ("traditional", "bp")

_STRIPE_BUDGET = 1 << 22  # elements per gathered stripe of the datapath


class ConfigError(ValueError):
    """Invalid simulator configuration or run request."""


class MaskPayloadMismatch(ValueError):
    """Burst payload length disagrees with the mask population count."""


@dataclass(frozen=True)
class PrologueLatencies:
    """Pipeline-fill cycles of the address generators, per mode and side."""

    trad_dynamic: int = 0
    trad_stationary: int = 51
    bp_dynamic_loss: int = 0
    bp_stationary_loss: int = 68
    bp_dynamic_grad: int = 68
    bp_stationary_grad: int = 51


@dataclass(frozen=True)
class SimConfig:
    array_dim: int = 16
    data_bytes: int = 4
    prologue: PrologueLatencies = field(default_factory=PrologueLatencies)
    reorg_bytes_per_element: int = 2     # one read plus one write per materialized element
    reorg_cycles_per_element: float = 1.0
    reorg_overlap: float = 0.0           # fraction of reorganization hidden under compute
    burst_overhead_bytes: int = 4        # base address + lane mask per compressed burst

    def __post_init__(self):
        if self.array_dim < 1:
            raise ConfigError(f"array_dim must be >= 1, got {self.array_dim}")
        if self.data_bytes < 1:
            raise ConfigError(f"data_bytes must be >= 1, got {self.data_bytes}")
        if not 0.0 <= self.reorg_overlap <= 1.0:
            raise ConfigError(f"reorg_overlap must be in [0, 1], got {self.reorg_overlap}")
        for name, val in asdict(self.prologue).items():
            if val < 0:
                raise ConfigError(f"prologue latency {name} must be >= 0, got {val}")


@dataclass
class SimReport:
    phase: str
    algo: str
    layer: str
    network: str
    compute_cycles: int
    reorg_cycles: int
    prologue_cycles: int
    offchip_bytes: dict
    onchip_bytes: dict
    stationary_tiles: int
    tile_passes: int
    gemm_mkn: tuple
    lowered_sparsity: float
    checksum: str | None = None

    @property
    def total_cycles(self) -> int:
        return self.compute_cycles + self.prologue_cycles + self.reorg_cycles

    @property
    def offchip_total(self) -> int:
        return sum(self.offchip_bytes.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gemm_mkn"] = list(self.gemm_mkn)
        d["total_cycles"] = self.total_cycles
        d["offchip_total"] = self.offchip_total
        return d


def load_stationary_tile(cfg: SimConfig, prologue: int = 0, first_fill: bool = True) -> int:
    """Cycles to land one stationary tile: dim cycles plus the pipeline
    fill for the first tile of a run; later loads hide behind compute."""
    return cfg.array_dim + prologue if first_fill else 0


def stream_dynamic_rows(cfg: SimConfig, m: int) -> int:
    """Cycles to push M dynamic rows through a loaded tile (fill + drain)."""
    return m + 2 * (cfg.array_dim - 1)


def crossbar_recover(burst: addressing.CompressedBurst, payload: np.ndarray) -> np.ndarray:
    """Scatter a burst payload back to its 16 lanes, zero-filling the rest."""
    payload = np.asarray(payload)
    if payload.shape != (burst.count,):
        raise MaskPayloadMismatch(
            f"payload length {payload.shape} != burst count {burst.count}")
    lanes = np.zeros(addressing.LANES, dtype=np.float32)
    rank = 0
    for i in range(addressing.LANES):
        if burst.mask >> i & 1:
            lanes[i] = payload[rank]
            rank += 1
    return lanes


class PEArrayState:
    """Functional PE grid with per-lane skewing FIFOs of depth 0..dim-1.

    Activations enter column 0 through the FIFO bank and shift right one
    column per cycle; partial sums descend one row per cycle, so column j
    emits the result of dynamic row m at cycle m + (dim-1) + j.  Used to
    validate the closed-form tile-pass timing and numerics.
    """

    def __init__(self, stationary: np.ndarray):
        stationary = np.asarray(stationary, dtype=np.float32)
        if stationary.ndim != 2 or stationary.shape[0] != stationary.shape[1]:
            raise ConfigError(f"stationary tile must be square, got {stationary.shape}")
        self.dim = stationary.shape[0]
        self.stationary = stationary
        self.fifos = [deque([0.0] * depth) for depth in range(self.dim)]
        self.acc = np.zeros(self.dim, dtype=np.float32)  # column exit registers

    def _skew(self, row: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim, dtype=np.float32)
        for i, q in enumerate(self.fifos):
            if not q:
                out[i] = row[i]
            else:
                q.append(row[i])
                out[i] = q.popleft()
        return out

    def run_tile_pass(self, dyn_rows: np.ndarray) -> tuple[np.ndarray, int]:
        dyn_rows = np.asarray(dyn_rows, dtype=np.float32)
        if dyn_rows.ndim != 2 or dyn_rows.shape[1] != self.dim:
            raise ShapeMismatch(f"dynamic rows must be (M, {self.dim})")
        m_rows = dyn_rows.shape[0]
        cycles = m_rows + 2 * (self.dim - 1)
        act = np.zeros((self.dim, self.dim), dtype=np.float32)
        psum = np.zeros((self.dim, self.dim), dtype=np.float32)
        out = np.zeros((m_rows, self.dim), dtype=np.float32)
        zero_row = np.zeros(self.dim, dtype=np.float32)
        for t in range(cycles):
            feed = dyn_rows[t] if t < m_rows else zero_row
            lane_in = self._skew(feed)
            act = np.concatenate([lane_in[:, None], act[:, :-1]], axis=1)
            psum = np.vstack([zero_row[None, :], psum[:-1]]) + act * self.stationary
            self.acc = psum[-1].copy()
            for j in range(self.dim):
                m = t - (self.dim - 1) - j
                if 0 <= m < m_rows:
                    out[m, j] = self.acc[j]
        return out, cycles


# GEMM shape per phase: result[m, n_cols] = dynamic[m, k] @ stationary[k, n_cols].

def _gemm_shape(phase: str, g: LayerGeometry) -> tuple[int, int, int]:
    if phase == "inference":
        return g.out_ch, g.in_ch * g.k_px, g.batch * g.out_px
    if phase == "loss":
        return g.in_ch, g.out_ch * g.k_px, g.batch * g.in_px
    if phase == "gradient":
        return g.out_ch, g.batch * g.ins_px, g.in_ch * g.k_px
    raise ConfigError(f"unknown phase {phase!r}")


def _prologue(phase: str, algo: str, cfg: SimConfig) -> int:
    p = cfg.prologue
    if algo == "traditional" or phase == "inference":
        return p.trad_dynamic + p.trad_stationary
    if phase == "loss":
        return p.bp_dynamic_loss + p.bp_stationary_loss
    return p.bp_dynamic_grad + p.bp_stationary_grad


def account(phase: str, algo: str, g: LayerGeometry, cfg: SimConfig = SimConfig(),
            layer: str = "", network: str = "") -> SimReport:
    """Closed-form cycle and byte counters for one run; no numerics."""
    if phase not in PHASES:
        raise ConfigError(f"unknown phase {phase!r}")
    if algo not in ALGOS:
        raise ConfigError(f"unknown algo {algo!r}")
    dim, db = cfg.array_dim, cfg.data_bytes
    m, k_dim, n_cols = _gemm_shape(phase, g)
    tiles_k = -(-k_dim // dim)
    tiles_n = -(-n_cols // dim)
    tiles = tiles_k * tiles_n
    compute = load_stationary_tile(cfg) + tiles * stream_dynamic_rows(cfg, m)

    kernel_bytes = g.out_ch * g.in_ch * g.k_px * db
    input_bytes = g.batch * g.in_ch * g.in_px * db
    loss_bytes = g.batch * g.out_ch * g.out_px * db

    reorg_elems = 0
    if algo == "traditional":
        if phase == "loss" and (g.map_h, g.map_w) != (g.out_h, g.out_w):
            reorg_elems = g.batch * g.out_ch * g.map_px
        elif phase == "gradient" and (g.ins_h, g.ins_w) != (g.out_h, g.out_w):
            reorg_elems = g.batch * g.out_ch * g.ins_px
    reorg_cycles = int(round(reorg_elems * cfg.reorg_cycles_per_element
                             * (1.0 - cfg.reorg_overlap)))

    if phase == "inference":
        stat_port = addressing.inference_nonpad_count(g)
        dyn_elems = m * k_dim
        off_a, off_b, wb = kernel_bytes, input_bytes, g.batch * g.out_ch * g.out_px * db
        sparsity = 1.0 - stat_port / (k_dim * n_cols)
    elif phase == "loss":
        nz = addressing.transposed_nonzero_count(g)
        stat_port = k_dim * n_cols if algo == "traditional" else nz
        dyn_elems = m * k_dim
        off_a = kernel_bytes
        off_b = g.batch * g.out_ch * g.map_px * db if algo == "traditional" else loss_bytes
        wb = g.batch * g.in_ch * g.in_px * db
        sparsity = 1.0 - nz / (k_dim * n_cols)
    else:  # gradient
        stat_port = addressing.grad_stationary_nonpad_count(g)
        dyn_nz_cols = g.batch * g.out_px
        dyn_elems = m * (k_dim if algo == "traditional" else dyn_nz_cols)
        if algo == "traditional":
            off_a = g.batch * g.out_ch * g.ins_px * db
        else:
            off_a = loss_bytes + cfg.burst_overhead_bytes * addressing.dilated_burst_count(g)
        off_b = input_bytes
        wb = g.out_ch * g.in_ch * g.k_px * db
        sparsity = 1.0 - g.out_px / g.ins_px

    return SimReport(
        phase=phase, algo=algo,
        layer=layer or f"{g.in_h}/{g.in_ch}/{g.out_ch}/{g.k_h}/{g.stride}/{g.pad_h}",
        network=network,
        compute_cycles=compute,
        reorg_cycles=reorg_cycles,
        prologue_cycles=_prologue(phase, algo, cfg),
        offchip_bytes={
            "to_buf_a": off_a,
            "to_buf_b": off_b,
            "writeback": wb,
            "reorg": reorg_elems * db * cfg.reorg_bytes_per_element,
        },
        onchip_bytes={
            "buf_a_to_pe": tiles_n * dyn_elems * db,
            "buf_b_to_pe": stat_port * db,
        },
        stationary_tiles=tiles,
        tile_passes=tiles,
        gemm_mkn=(m, k_dim, n_cols),
        lowered_sparsity=sparsity,
    )


def account_offchip(phase: str, algo: str, g: LayerGeometry,
                    cfg: SimConfig = SimConfig()) -> dict:
    """Off-chip byte counters only (see :func:`account`)."""
    return account(phase, algo, g, cfg).offchip_bytes


def _validate_operands(phase: str, g: LayerGeometry, operands: dict) -> dict:
    shapes = {
        "input": (g.batch, g.in_ch, g.in_h, g.in_w),
        "kernel": (g.out_ch, g.in_ch, g.k_h, g.k_w),
        "d_out": (g.batch, g.out_ch, g.out_h, g.out_w),
    }
    needed = {
        "inference": ("input", "kernel"),
        "loss": ("kernel", "d_out"),
        "gradient": ("input", "d_out"),
    }[phase]
    got = {}
    for key in needed:
        t = operands.get(key)
        if t is None:
            raise ShapeMismatch(f"phase {phase!r} requires operand {key!r}")
        if t.dims != shapes[key]:
            raise ShapeMismatch(f"{key}: expected {shapes[key]}, got {t.dims}")
        got[key] = t
    return got


def run_gemm(phase: str, algo: str, g: LayerGeometry, operands: dict,
             cfg: SimConfig = SimConfig(), layer: str = "",
             network: str = "") -> tuple[SimReport, Tensor4D]:
    """Execute one lowered GEMM through the implicit datapath and return
    the populated report plus the result tensor.

    The datapath gathers stationary stripes (and, in the gradient phase,
    dynamic blocks) through the address-mapping functions; both algorithms
    share it, so their results are bit-identical and only the accounting
    differs.
    """
    rep = account(phase, algo, g, cfg, layer=layer, network=network)
    ops = _validate_operands(phase, g, operands)
    m, k_dim, n_cols = rep.gemm_mkn

    if phase == "inference":
        a_full = ops["kernel"].data.reshape(g.out_ch, k_dim)
        stat_block = addressing.inference_block_indices
        stat_src = ops["input"].flat
    elif phase == "loss":
        wk = ops["kernel"].data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        a_full = np.ascontiguousarray(wk.reshape(g.in_ch, k_dim))
        stat_block = addressing.transposed_block_indices
        stat_src = ops["d_out"].flat
    else:
        a_full = None  # gathered per stripe through the dilated mapping
        stat_block = addressing.grad_stationary_block_indices
        stat_src = ops["input"].flat

    result = np.zeros((m, n_cols), dtype=np.float32)
    width = max(16, min(k_dim, _STRIPE_BUDGET // max(n_cols, m, 1)))
    for k0 in range(0, k_dim, width):
        k1 = min(k0 + width, k_dim)
        stat = addressing.gather_values(stat_block(g, k0, k1, 0, n_cols), stat_src)
        if a_full is not None:
            dyn = a_full[:, k0:k1]
        else:
            dyn = addressing.gather_values(
                addressing.dilated_block_indices(g, 0, m, k0, k1), ops["d_out"].flat)
        result += dyn @ stat

    if phase == "inference":
        out = Tensor4D(np.ascontiguousarray(
            result.reshape(g.out_ch, g.batch, g.out_h, g.out_w).transpose(1, 0, 2, 3)))
    elif phase == "loss":
        out = Tensor4D(np.ascontiguousarray(
            result.reshape(g.in_ch, g.batch, g.in_h, g.in_w).transpose(1, 0, 2, 3)))
    else:
        out = Tensor4D(result.reshape(g.out_ch, g.in_ch, g.k_h, g.k_w))

    rep.checksum = hashlib.sha256(out.data.tobytes()).hexdigest()
    return rep, out


def verify_against_reference(phase: str, g: LayerGeometry, operands: dict,
                             result: Tensor4D) -> bool:
    """Exact comparison of a datapath result with the brute-force oracle."""
    ops = _validate_operands(phase, g, operands)
    if phase == "inference":
        expect = conv_forward(ops["input"], ops["kernel"], g)
    elif phase == "loss":
        expect = loss_backward_ref(ops["d_out"], ops["kernel"], g)
    else:
        expect = gradient_backward_ref(ops["input"], ops["d_out"], g)
    return bool(np.array_equal(expect.data, result.data))
