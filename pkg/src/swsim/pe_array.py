"""N x M processing-element array with zero gating and partial-sum buffers.

Each PU broadcasts one weight to its M PEs. A PE whose selected activation
is zero is clock gated: the cycle still elapses but the accumulator is left
alone. In the dual 8-bit mode every PE carries two lanes that share the
weight, each with its own 32-bit logical accumulator.
"""

from __future__ import annotations

import enum

import numpy as np

from swsim.errors import DrainIncomplete, ModeMismatch, SlotOutOfRange
from swsim.nn_model import DEFAULT_RULES, FixedPointRules, signed_range


class PrecisionMode(enum.Enum):
    FIXED16 = "fixed16"
    INT8_DUAL = "int8dual"

    @property
    def lanes(self) -> int:
        return 2 if self is PrecisionMode.INT8_DUAL else 1


class PeArray:
    def __init__(self, N: int, M: int, slice_bram: int,
                 mode: PrecisionMode = PrecisionMode.FIXED16,
                 rules: FixedPointRules = DEFAULT_RULES):
        self.N, self.M, self.slice_bram = N, M, slice_bram
        self.mode = mode
        self.L = mode.lanes
        self.rules = rules
        self.psb = np.zeros((N, M * self.L, slice_bram), dtype=np.int64)
        self.finished = np.zeros((N, slice_bram), dtype=bool)
        self.cycles = 0
        self.gated_cycles = 0
        self.active_cycles = 0
        self.mac_count = 0
        self.idle_slots = 0

    @property
    def lanes(self) -> int:
        return self.M * self.L

    @property
    def pe_cycles(self) -> int:
        """Engaged PE-lane cycles, gated or not."""
        return self.gated_cycles + self.active_cycles

    @property
    def issued_slots(self) -> int:
        return self.pe_cycles + self.idle_slots

    def _check_slot(self, slot):
        if not 0 <= slot < self.slice_bram:
            raise SlotOutOfRange(f"PSB slot {slot} outside bank of {self.slice_bram}")

    def _accumulate(self, pus, weights, acts, slot, lane_mask):
        """weights: (n,), acts: (lanes,), lane_mask: (lanes,) engaged lanes."""
        nz = (acts != 0) & lane_mask
        n_pu = len(pus)
        gated = int(np.count_nonzero(lane_mask & (acts == 0)))
        active = int(np.count_nonzero(nz))
        self.gated_cycles += gated * n_pu
        self.active_cycles += active * n_pu
        self.mac_count += active * n_pu
        self.idle_slots += (self.lanes - int(np.count_nonzero(lane_mask))) * n_pu
        if active:
            cur = self.psb[pus, :, slot]
            upd = self.rules.saturate(cur + weights[:, None] * acts[None, :])
            self.psb[pus, :, slot] = np.where(nz[None, :], upd, cur)

    def pu_cycle(self, pu_id: int, weight: int, acts, psb_slot: int, lane_mask=None) -> None:
        """One cycle of a single PU in Fixed16 mode."""
        if self.mode is not PrecisionMode.FIXED16:
            raise ModeMismatch("pu_cycle is the Fixed16 path; use pe_dual8_cycle")
        self._check_slot(psb_slot)
        if not 0 <= pu_id < self.N:
            raise IndexError(f"PU {pu_id} outside array of {self.N}")
        acts = np.asarray(acts, dtype=np.int64).reshape(self.lanes)
        mask = np.ones(self.lanes, bool) if lane_mask is None else np.asarray(lane_mask, bool)
        self._accumulate([pu_id], np.array([weight], dtype=np.int64), acts, psb_slot, mask)

    def pe_dual8_cycle(self, pu_id: int, weight: int, act_pairs, psb_slot: int,
                       lane_mask=None) -> None:
        """One cycle of a PU in dual 8-bit mode; ``act_pairs`` is (M, 2)."""
        if self.mode is not PrecisionMode.INT8_DUAL:
            raise ModeMismatch("pe_dual8_cycle requires Int8Dual mode")
        self._check_slot(psb_slot)
        lo, hi = signed_range(8)
        pairs = np.asarray(act_pairs, dtype=np.int64).reshape(self.M, 2)
        if not lo <= weight <= hi or pairs.min() < lo or pairs.max() > hi:
            raise ModeMismatch("dual 8-bit MAC operands must fit in 8 bits")
        mask = np.ones(self.lanes, bool) if lane_mask is None else np.asarray(lane_mask, bool)
        self._accumulate([pu_id], np.array([weight], dtype=np.int64), pairs.reshape(-1),
                         psb_slot, mask)

    def array_cycle(self, weights, acts, psb_slot: int, pu_mask=None, lane_mask=None) -> None:
        """Every enabled PU at once; equivalent to one pu_cycle per PU."""
        self._check_slot(psb_slot)
        weights = np.asarray(weights, dtype=np.int64)
        acts = np.asarray(acts, dtype=np.int64)
        lane_mask = np.ones(self.lanes, bool) if lane_mask is None else lane_mask
        pus = np.arange(self.N) if pu_mask is None else np.flatnonzero(pu_mask)
        self._accumulate(pus, weights[pus], acts, psb_slot, lane_mask)
        self.cycles += 1

    def lane_cycle(self, pu_id: int, weights, acts, psb_slot: int, lane_mask) -> None:
        """Per-PE weights (FC pattern): PE j computes ``weights[j] * acts[j]``."""
        self._check_slot(psb_slot)
        w = np.asarray(weights, dtype=np.int64)
        a = np.asarray(acts, dtype=np.int64)
        mask = np.asarray(lane_mask, dtype=bool)
        nz = (a != 0) & mask
        active = int(nz.sum())
        self.gated_cycles += int((mask & (a == 0)).sum())
        self.active_cycles += active
        self.mac_count += active
        self.idle_slots += self.lanes - int(mask.sum())
        cur = self.psb[pu_id, :, psb_slot]
        self.psb[pu_id, :, psb_slot] = np.where(nz, self.rules.saturate(cur + w * a), cur)
        self.cycles += 1

    def finish(self, slots) -> None:
        self.finished[:, slots] = True

    def psb_drain(self, pu_id: int, slots, relu: bool = False) -> np.ndarray:
        """Return finished outputs for ``slots`` as (len(slots), lanes) and clear them."""
        slots = np.atleast_1d(np.asarray(slots, dtype=np.int64))
        if not np.all(self.finished[pu_id, slots]):
            raise DrainIncomplete(f"PU {pu_id}: slots not finished")
        vals = self.psb[pu_id][:, slots].T.copy()
        self.psb[pu_id][:, slots] = 0
        self.finished[pu_id, slots] = False
        return np.maximum(vals, 0) if relu else vals
