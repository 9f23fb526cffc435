"""Analytic performance models and the per-run report.

Covers mapping efficiency (DMI), gated-activation accounting (DAI), peak
throughput, DSP/BRAM estimates, on-chip bandwidth and the roofline.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np

from swsim.nn_model import LayerKind, LayerSpec, Tensor
from swsim.pe_array import PrecisionMode

if TYPE_CHECKING:
    from swsim.scheduler import CycleStats, SimConfig


def dmi_exact(layer: LayerSpec, M: int) -> Fraction:
    U, V = layer.U, layer.V
    if V >= M:
        return Fraction(V, math.ceil(V / M) * M)
    return Fraction(U * V, math.ceil(U / (M // V)) * M)


def dmi(layer: LayerSpec, M: int) -> float:
    """Fraction of issued PE slots that hold a real output position."""
    return float(dmi_exact(layer, M))


def dai(ifmap: Tensor | np.ndarray) -> float:
    data = ifmap.data if isinstance(ifmap, Tensor) else np.asarray(ifmap)
    if data.size == 0:
        return 0.0
    return float(np.count_nonzero(data == 0) / data.size)


def peak_throughput(cfg: "SimConfig") -> float:
    """ops/s with 2 ops per MAC; the dual 8-bit PE does two MACs per cycle."""
    macs_per_pe = 2 if cfg.mode is PrecisionMode.INT8_DUAL else 1
    return 2 * macs_per_pe * cfg.clock_hz * cfg.N * cfg.M


@dataclass
class ResourceEstimate:
    dsp: int
    dsp_capacity: int
    bram_banks: int
    bram_breakdown: dict

    @property
    def exceeds_device(self) -> bool:
        return self.dsp > self.dsp_capacity


def resource_estimate(cfg: "SimConfig") -> ResourceEstimate:
    # 6 DSPs compute WIB index addresses and the VGM shift amount
    per_pe = 2 if cfg.mode is PrecisionMode.INT8_DUAL else 1
    dsp = per_pe * cfg.N * cfg.M + 6
    banks = {"psb": cfg.N * cfg.M, "abin": 2, "about": 1, "wib": 2, "wb": cfg.N}
    return ResourceEstimate(dsp, cfg.dsp_capacity, sum(banks.values()), banks)


def bandwidth_per_cycle(cfg: "SimConfig") -> int:
    """On-chip bits per cycle: N broadcast weights plus M selected activations.

    In the dual 8-bit mode the activation datapath keeps its width and carries
    two activations, hence ``A * lanes``.
    """
    return cfg.N * cfg.B + cfg.M * cfg.A * cfg.mode.lanes


def bandwidth_comparators(cfg: "SimConfig", F: int | None = None) -> dict:
    out = {
        "ours": bandwidth_per_cycle(cfg),
        "cambricon_s": cfg.M * cfg.A + cfg.N * cfg.M * cfg.B,
    }
    if F is not None:
        out["scnn"] = cfg.N * F * cfg.B
    return out


def fc_roofline(pe_count: int, bus_bits: int, clock_hz: float, weight_bits: int) -> float:
    """Attainable ops/s for an FC layer: every streamed weight feeds one MAC."""
    compute = 2 * clock_hz * pe_count
    bandwidth = 2 * clock_hz * bus_bits / weight_bits
    return min(compute, bandwidth)


def fc_knee(bus_bits: int, weight_bits: int) -> float:
    """Engaged PE count where the FC compute roof meets the bandwidth roof."""
    return bus_bits / weight_bits


def roofline(layer: LayerSpec, cfg: "SimConfig", stats: "CycleStats | None" = None) -> float:
    """Attainable ops/s for ``layer`` under ``cfg``.

    FC layers engage one PU (M PEs). Conv layers use the arithmetic intensity
    of the measured off-chip traffic in ``stats``; without stats the traffic
    is the analytic dense estimate.
    """
    if layer.kind is LayerKind.FC:
        return fc_roofline(cfg.M, cfg.bus_bits, cfg.clock_hz, cfg.B)
    if layer.kind is not LayerKind.CONV:
        return 0.0
    compute = peak_throughput(cfg)
    if stats is not None:
        ops, moved = 2 * stats.useful_macs, stats.bytes_moved
    else:
        from swsim.scheduler import conv_traffic
        a = layer.C * layer.R * layer.R
        bi, bo = conv_traffic(layer, cfg, [a] * math.ceil(layer.F / cfg.N))
        ops, moved = 2 * layer.dense_macs, bi + bo
    if moved == 0:
        return compute
    return min(compute, ops / moved * cfg.bus_bits / 8 * cfg.clock_hz)


@dataclass
class LayerPerf:
    index: int
    kind: str
    cycles: int
    compute_cycles: int
    stall_cycles: int
    macs: int
    active_macs: int
    dense_macs: int
    dmi: float | None
    dmi_measured: float | None
    dai: float
    dai_input: float
    effective_gops: float
    dense_equivalent_gops: float
    attainable_gops_roofline: float
    bytes_moved: int
    note: str = ""


@dataclass
class PerfReport:
    per_layer: list[LayerPerf]
    images_per_s: float
    total_cycles: int
    peak_gops: float
    dsp_estimate: int
    dsp_exceeds_device: bool
    bram_estimate: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def layer_perf(k: int, layer: LayerSpec, stats: "CycleStats | None", cfg: "SimConfig",
               x: Tensor | None = None) -> LayerPerf:
    if stats is None:
        return LayerPerf(k, layer.kind.value, 0, 0, 0, 0, 0, 0, None, None, 0.0,
                         dai(x) if x is not None else 0.0, 0.0, 0.0, 0.0, 0,
                         note="pooling runs on the reference path; cycles not modeled")
    cycles = stats.total_cycles
    sec = cycles / cfg.clock_hz if cycles else math.inf
    issued = stats.pe_cycles + stats.idle_pe_slots
    is_conv = layer.kind is LayerKind.CONV
    return LayerPerf(
        index=k, kind=layer.kind.value, cycles=cycles,
        compute_cycles=stats.compute_cycles, stall_cycles=stats.memory_stall_cycles,
        macs=stats.useful_macs, active_macs=stats.total_macs, dense_macs=layer.dense_macs,
        dmi=dmi(layer, cfg.lanes) if is_conv else None,
        dmi_measured=(stats.pe_cycles / issued) if issued else None,
        dai=(stats.gated_pe_cycles / stats.pe_cycles) if stats.pe_cycles else 0.0,
        dai_input=dai(x) if x is not None else 0.0,
        effective_gops=2 * stats.useful_macs / sec / 1e9,
        dense_equivalent_gops=2 * layer.dense_macs / sec / 1e9,
        attainable_gops_roofline=roofline(layer, cfg, stats) / 1e9,
        bytes_moved=stats.bytes_moved,
    )


def build_report(layers: list[LayerSpec], stats: list, cfg: "SimConfig",
                 inputs: list[Tensor] | None = None) -> PerfReport:
    inputs = inputs or [None] * len(layers)
    per = [layer_perf(k, l, s, cfg, x) for k, (l, s, x) in enumerate(zip(layers, stats, inputs))]
    total = sum(p.cycles for p in per)
    res = resource_estimate(cfg)
    return PerfReport(
        per_layer=per,
        images_per_s=cfg.clock_hz / total if total else math.inf,
        total_cycles=total,
        peak_gops=peak_throughput(cfg) / 1e9,
        dsp_estimate=res.dsp,
        dsp_exceeds_device=res.exceeds_device,
        bram_estimate=res.bram_banks,
        config=cfg.to_dict(),
    )
