"""Sparse-wise dataflow driver: tiling, PU mapping and the cycle loop nest.

Loop order per conv layer (outermost first): output-row tile, output-channel
group (N kernels), input channel, output pass (row/column group inside the
tile), kernel row, stored entry. Only stored entries cost a cycle, so pruned
weights are skipped by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from swsim.errors import FormatError, InfeasibleTile, ShapeMismatch
from swsim.nn_model import (LayerKind, LayerSpec, Tensor, maxpool_reference, requantize,
                            signed_range, zero_pad)
from swsim.pe_array import PeArray, PrecisionMode
from swsim.sparse_format import CompressedFc, CompressedGroup
from swsim.vgm import Vgm


@dataclass(frozen=True)
class SimConfig:
    N: int = 48
    M: int = 28
    clock_hz: float = 200e6
    A: int = 16
    B: int = 16
    abin_bytes: int = 2048
    about_bytes: int = 2048
    wib_bytes: int = 4096
    wb_bytes: int = 512
    psb_bytes: int = 2048
    bus_bits: int = 128
    mode: PrecisionMode = PrecisionMode.FIXED16
    pipeline_fill: int = 0
    vgm_shift_penalty: int = 0
    dsp_capacity: int = 2520

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", PrecisionMode(self.mode.lower()))
        if self.N < 1 or self.M < 1:
            raise ValueError("N and M must be >= 1")
        if self.psb_bytes < 4:
            raise ValueError("PSB must hold at least one 32-bit entry")
        if self.mode is PrecisionMode.INT8_DUAL and (self.A > 8 or self.B > 8):
            raise ValueError("Int8Dual needs A <= 8 and B <= 8")

    @classmethod
    def int8(cls, **kw) -> "SimConfig":
        return cls(A=8, B=8, mode=PrecisionMode.INT8_DUAL, **kw)

    @property
    def slice_bram(self) -> int:
        return self.psb_bytes // 4

    @property
    def lanes(self) -> int:
        """Output columns one PU produces per pass."""
        return self.M * self.mode.lanes

    def override(self, **kv) -> "SimConfig":
        """Apply string overrides such as those given with ``--config k=v``."""
        types = {f.name: f.type for f in fields(self)}
        parsed = {}
        for k, v in kv.items():
            if k not in types:
                raise KeyError(f"unknown config field {k!r}")
            if k == "mode":
                parsed[k] = PrecisionMode(str(v).lower())
            elif k == "clock_hz":
                parsed[k] = float(v)
            else:
                parsed[k] = int(v)
        return replace(self, **parsed)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["mode"] = self.mode.value
        d["slice_bram"] = self.slice_bram
        return d


class MappingMode(enum.Enum):
    ROW_TILE = "row"      # V >= M: a 1 x M strip per PU
    BLOCK_TILE = "block"  # V < M: a floor(M/V) x V block per PU


@dataclass(frozen=True)
class TilePlan:
    U_t: int
    H_t: int
    tile_count: int
    overlap_rows: int
    S: int
    U: int

    def tiles(self):
        """Yield (first output row, output rows) per tile."""
        for oh in range(0, self.U, self.U_t):
            yield oh, min(self.U_t, self.U - oh)

    def input_rows(self, oh: int, rows: int) -> tuple[int, int]:
        """Half-open input-row range read by the tile starting at output row ``oh``."""
        R = self.H_t - (self.U_t - 1) * self.S
        return oh * self.S, oh * self.S + (rows - 1) * self.S + R


@dataclass
class CycleStats:
    compute_cycles: int = 0
    memory_stall_cycles: int = 0
    gated_pe_cycles: int = 0
    active_pe_cycles: int = 0
    idle_pe_slots: int = 0
    total_macs: int = 0
    bytes_in: int = 0
    bytes_out: int = 0
    entries_visited: int = 0
    row_passes: int = 0
    vgm_loads: int = 0
    vgm_reloads: int = 0
    vgm_load_bits: int = 0
    max_fetch_bits_per_cycle: int = 0
    tile_count: int = 0

    @property
    def total_cycles(self) -> int:
        return self.compute_cycles + self.memory_stall_cycles

    @property
    def pe_cycles(self) -> int:
        return self.gated_pe_cycles + self.active_pe_cycles

    @property
    def useful_macs(self) -> int:
        """MAC slots with a stored weight on an engaged PE (gated or not)."""
        return self.pe_cycles

    @property
    def bytes_moved(self) -> int:
        return self.bytes_in + self.bytes_out

    def absorb(self, pe: PeArray) -> None:
        self.gated_pe_cycles += pe.gated_cycles
        self.active_pe_cycles += pe.active_cycles
        self.idle_pe_slots += pe.idle_slots
        self.total_macs += pe.mac_count

    def __add__(self, other: "CycleStats") -> "CycleStats":
        out = CycleStats()
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            setattr(out, f.name, max(a, b) if f.name == "max_fetch_bits_per_cycle" else a + b)
        return out


def map_plan(layer: LayerSpec, cfg: SimConfig) -> MappingMode:
    return MappingMode.ROW_TILE if layer.V >= cfg.lanes else MappingMode.BLOCK_TILE


def tile_plan(layer: LayerSpec, cfg: SimConfig) -> TilePlan:
    lanes, slice_bram, V = cfg.lanes, cfg.slice_bram, layer.V
    u_t = min(layer.U, (lanes * slice_bram) // V)
    # each PE holds one partial sum per pass; cap U_t so passes fit one bank
    if map_plan(layer, cfg) is MappingMode.ROW_TILE:
        u_t = min(u_t, slice_bram // math.ceil(V / lanes))
    else:
        u_t = min(u_t, slice_bram * (lanes // V))
    if u_t < 1:
        raise InfeasibleTile(f"V={V} does not fit M*Slice_BRAM={lanes * slice_bram}")
    h_t = (u_t - 1) * layer.S + layer.R
    return TilePlan(u_t, h_t, math.ceil(layer.U / u_t), layer.R - layer.S, layer.S, layer.U)


@dataclass
class _Pass:
    slot: int
    rows: np.ndarray   # input row of the first kernel row, per register segment
    col0: int          # first input column of each segment
    out_u: np.ndarray  # output row per lane
    out_v: np.ndarray  # output column per lane
    mask: np.ndarray   # engaged lanes


def _passes(layer: LayerSpec, cfg: SimConfig, oh: int, rows: int) -> list[_Pass]:
    lanes, S, V = cfg.lanes, layer.S, layer.V
    out = []
    if map_plan(layer, cfg) is MappingMode.ROW_TILE:
        n_owg = math.ceil(V / lanes)
        lane = np.arange(lanes)
        for t in range(rows):
            for g in range(n_owg):
                ow = g * lanes
                out.append(_Pass(t * n_owg + g, np.array([(oh + t) * S]), ow * S,
                                 np.full(lanes, oh + t), ow + lane, ow + lane < V))
    else:
        per = lanes // V
        lane = np.arange(lanes)
        r, v = lane // V, lane % V
        for p in range(math.ceil(rows / per)):
            base = oh + p * per
            u = base + r
            mask = (lane < per * V) & (u < oh + rows)
            out.append(_Pass(p, (base + np.arange(per)) * S, 0, u, v, mask))
    return out


def _segment(X_c: np.ndarray, row: int, col0: int, length: int) -> np.ndarray:
    seg = np.zeros(length, dtype=np.int64)
    if 0 <= row < X_c.shape[0]:
        piece = X_c[row, col0:col0 + length]
        seg[:piece.size] = piece
    return seg


def _check_range(name, arr, width):
    lo, hi = signed_range(width)
    if arr.size and (arr.min() < lo or arr.max() > hi):
        raise ShapeMismatch(f"{name} values exceed {width}-bit range")


def conv_traffic(layer: LayerSpec, cfg: SimConfig, entries: list[int]) -> tuple[int, int]:
    """Off-chip (bytes_in, bytes_out) for one conv layer.

    The ifmap slice and every group's compressed weights are fetched once per
    (tile, group); outputs leave once at activation width.
    """
    plan = tile_plan(layer, cfg)
    bytes_in = 0
    for oh, rows in plan.tiles():
        h = (rows - 1) * layer.S + layer.R
        for a in entries:
            bytes_in += layer.C * h * layer.W * cfg.A // 8
            bytes_in += cfg.N * a * cfg.B // 8
            bytes_in += 2 * layer.C + math.ceil(layer.R * layer.C / 2) + math.ceil(a / 2)
    bytes_out = layer.F * layer.U * layer.V * cfg.A // 8
    return bytes_in, bytes_out


def _stall(bytes_moved: int, bus_bits: int, compute: int) -> int:
    return max(0, math.ceil(bytes_moved * 8 / bus_bits) - compute)


def run_conv_layer(layer: LayerSpec, groups: list[CompressedGroup], ifmap: Tensor,
                   cfg: SimConfig) -> tuple[Tensor, CycleStats]:
    if layer.kind is not LayerKind.CONV:
        raise ShapeMismatch("run_conv_layer needs a conv layer")
    if ifmap.shape != layer.input_shape:
        raise ShapeMismatch(f"ifmap {ifmap.shape} != expected {layer.input_shape}")
    N, F, C, R, S = cfg.N, layer.F, layer.C, layer.R, layer.S
    if len(groups) != math.ceil(F / N):
        raise ShapeMismatch(f"{len(groups)} groups for F={F}, N={N}")
    for g in groups:
        if (g.group_size, g.C, g.R) != (N, C, R):
            raise ShapeMismatch(f"group (N,C,R)=({g.group_size},{g.C},{g.R}) vs ({N},{C},{R})")
        g.check()
        _check_range("weights", g.values, cfg.B)
    X = ifmap.data
    _check_range("activations", X, cfg.A)

    plan = tile_plan(layer, cfg)
    mapping = map_plan(layer, cfg)
    lanes = cfg.lanes
    if mapping is MappingMode.ROW_TILE:
        vgm = Vgm.for_row(lanes, S, R)
        seg_len = vgm.depth
    else:
        per = lanes // layer.V
        vgm = Vgm.for_block(per, layer.V, S, R)
        seg_len = vgm.depth // per
    pe = PeArray(N, cfg.M, cfg.slice_bram, cfg.mode)
    stats = CycleStats(tile_count=plan.tile_count)
    out = np.zeros((len(groups) * N, layer.U, layer.V), dtype=np.int64)

    for oh, rows in plan.tiles():
        passes = _passes(layer, cfg, oh, rows)
        for gi, g in enumerate(groups):
            real = min(N, F - gi * N)
            pu_mask = np.arange(N) < real
            ch_start = g.channel_starts()
            for ic in range(C):
                Xc = X[ic]
                for p in passes:
                    fetch_bits = real * cfg.B + int(p.mask.sum()) * cfg.A
                    i = int(ch_start[ic])
                    stats.row_passes += 1
                    stats.compute_cycles += cfg.pipeline_fill
                    for kh in range(R):
                        kc = ic * R + kh
                        if kh > 0:
                            i += int(g.r_pointer[kc - 1])
                        vgm.load(np.concatenate([_segment(Xc, row + kh, p.col0, seg_len)
                                                 for row in p.rows]))
                        vgm.reload()
                        for kw in range(int(g.r_pointer[kc])):
                            step = int(g.index[i + kw])
                            acts = vgm.select(step)
                            if acts.size < lanes:
                                # block mappings leave lanes past floor(M/V)*V idle
                                acts = np.concatenate([acts, np.zeros(lanes - acts.size, np.int64)])
                            pe.array_cycle(g.values[:, i + kw], acts, p.slot, pu_mask, p.mask)
                            stats.compute_cycles += 1
                            stats.entries_visited += 1
                            if step > 1:
                                stats.compute_cycles += cfg.vgm_shift_penalty
                            stats.max_fetch_bits_per_cycle = max(
                                stats.max_fetch_bits_per_cycle, fetch_bits)
            slots = [p.slot for p in passes]
            pe.finish(slots)
            for pu in range(real):
                vals = pe.psb_drain(pu, slots, relu=layer.relu)
                for p, row in zip(passes, vals):
                    out[gi * N + pu, p.out_u[p.mask], p.out_v[p.mask]] = row[p.mask]
            for pu in range(real, N):
                pe.psb_drain(pu, slots)

    stats.absorb(pe)
    stats.vgm_loads, stats.vgm_reloads = vgm.loads, vgm.reloads
    stats.vgm_load_bits = vgm.loads * vgm.depth * cfg.A
    stats.bytes_in, stats.bytes_out = conv_traffic(layer, cfg, [g.a for g in groups])
    stats.memory_stall_cycles = _stall(stats.bytes_moved, cfg.bus_bits, stats.compute_cycles)
    return Tensor(out[:F], elem_width=32), stats


def run_fc_layer(layer: LayerSpec, fc: CompressedFc, ivec: Tensor,
                 cfg: SimConfig) -> tuple[Tensor, CycleStats]:
    """One PU walks M matrix rows at a time, one stored entry per PE per cycle."""
    if layer.kind is not LayerKind.FC:
        raise ShapeMismatch("run_fc_layer needs an FC layer")
    x = ivec.data.reshape(-1)
    if x.size != layer.C or fc.F != layer.F:
        raise ShapeMismatch(f"FC {layer.F}x{layer.C} vs input {ivec.shape}, weights {fc.F} rows")
    _check_range("activations", x, cfg.A)
    _check_range("weights", fc.values, cfg.B)
    M = cfg.M
    pe = PeArray(1, M, cfg.slice_bram, PrecisionMode.FIXED16)
    stats = CycleStats(tile_count=1)
    out = np.zeros(layer.F, dtype=np.int64)
    starts = fc.row_starts
    for r0 in range(0, layer.F, M):
        rows = np.arange(r0, min(layer.F, r0 + M))
        lens = starts[rows + 1] - starts[rows]
        cols = [fc.row_columns(r) for r in rows]
        if any(c.size and c[-1] >= layer.C for c in cols):
            raise FormatError(f"FC rows {r0}..: column index past C={layer.C}")
        stats.compute_cycles += cfg.pipeline_fill
        stats.row_passes += 1
        for k in range(int(lens.max(initial=0))):
            mask = np.zeros(M, dtype=bool)
            mask[:rows.size] = k < lens
            w = np.zeros(M, dtype=np.int64)
            a = np.zeros(M, dtype=np.int64)
            for j in np.flatnonzero(mask):
                w[j] = fc.values[starts[rows[j]] + k]
                a[j] = x[cols[j][k]]
            pe.lane_cycle(0, w, a, 0, mask)
            stats.compute_cycles += 1
            stats.entries_visited += int(mask.sum())
            stats.max_fetch_bits_per_cycle = max(stats.max_fetch_bits_per_cycle,
                                                 int(mask.sum()) * (cfg.B + cfg.A))
        pe.finish([0])
        out[rows] = pe.psb_drain(0, [0], relu=layer.relu)[0][:rows.size]
    stats.absorb(pe)
    weight_bits = fc.entries * cfg.B
    stats.bytes_in = math.ceil(weight_bits / 8) + math.ceil(fc.entries / 2) \
        + 4 * (layer.F + 1) + layer.C * cfg.A // 8
    stats.bytes_out = layer.F * cfg.A // 8
    # weights stream from DRAM with no reuse; the rest is negligible by comparison
    stats.memory_stall_cycles = max(0, math.ceil(weight_bits / cfg.bus_bits) - stats.compute_cycles)
    return Tensor(out, elem_width=32), stats


def run_network(layers: list[LayerSpec], weights: list, x: Tensor, cfg: SimConfig,
                return_all: bool = False):
    """Chain layers; pooling runs on the oracle path and is not cycle-modeled.

    ``weights[k]`` is a list of CompressedGroup (conv), a CompressedFc (FC)
    or None (pooling). Returns ``(output, PerfReport)``; with ``return_all``
    the list of every layer's output is returned as a third element.
    """
    from swsim import perf

    if len(weights) != len(layers):
        raise FormatError(f"{len(weights)} weight entries for {len(layers)} layers")
    outs, layer_stats = [], []
    cur = x
    for k, layer in enumerate(layers):
        w = weights[k]
        try:
            if layer.kind is LayerKind.CONV:
                if not isinstance(w, list):
                    raise FormatError(f"layer {k}: conv layer needs compressed groups")
                y, st = run_conv_layer(layer, w, zero_pad(cur, layer.pad), cfg)
            elif layer.kind is LayerKind.FC:
                if not isinstance(w, CompressedFc):
                    raise FormatError(f"layer {k}: FC layer needs a compressed matrix")
                y, st = run_fc_layer(layer, w, Tensor(cur.flat(), cur.elem_width), cfg)
            else:
                y, st = maxpool_reference(zero_pad(cur, layer.pad), layer.R, layer.S), None
        except ShapeMismatch as e:
            raise ShapeMismatch(f"layer {k}: {e}") from e
        if k < len(layers) - 1 and layer.kind is not LayerKind.MAXPOOL:
            y = requantize(y, layer.out_shift, cfg.A)
        outs.append(y)
        layer_stats.append(st)
        cur = y
    report = perf.build_report(layers, layer_stats, cfg, [o for o in [x] + outs[:-1]])
    if return_all:
        return outs[-1], report, outs
    return outs[-1], report
