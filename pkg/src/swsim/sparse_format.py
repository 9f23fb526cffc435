"""Step-index CSR codec for shape-wise structured-sparse weights.

Conv groups share one index across the group's kernels: ``index`` holds the
number of pruned weights skipped before each stored entry, ``r_pointer`` the
number of stored entries per kernel row and ``offset`` the number per input
channel. Positions decode as ``pos_next = pos_prev + step + 1`` starting from
``pos_prev = -1`` at the beginning of every row.

FC matrices use per-row step indices. A gap too large for a 4-bit step is
bridged with filler entries (value 0, step 15), each advancing 16 columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from swsim.errors import CorruptIndex, PatternMismatch, RowTooWide, ShapeMismatch
from swsim.nn_model import Tensor

MAX_STEP = 15
MAX_OFFSET = 0xFFFF


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.int64)


@dataclass
class CompressedGroup:
    group_size: int
    C: int
    R: int
    index: np.ndarray       # (a,) 4-bit steps
    r_pointer: np.ndarray   # (C*R,) 4-bit counts
    offset: np.ndarray      # (C,) 16-bit counts
    values: np.ndarray      # (group_size, a)

    @property
    def a(self) -> int:
        return int(self.index.size)

    def channel_starts(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.offset)[:-1])).astype(np.int64)

    def check(self) -> None:
        """Raise CorruptIndex unless every structural invariant holds."""
        if self.r_pointer.shape != (self.C * self.R,) or self.offset.shape != (self.C,):
            raise CorruptIndex("r_pointer/offset length disagrees with C, R")
        if self.values.shape != (self.group_size, self.a):
            raise CorruptIndex(f"values shape {self.values.shape} != ({self.group_size}, {self.a})")
        if np.any(self.index < 0) or np.any(self.index > MAX_STEP):
            raise CorruptIndex("index entry outside 4-bit range")
        if np.any(self.r_pointer < 0) or np.any(self.r_pointer > MAX_STEP):
            raise CorruptIndex("r_pointer entry outside 4-bit range")
        per_channel = self.r_pointer.reshape(self.C, self.R).sum(axis=1)
        if not np.array_equal(per_channel, self.offset):
            raise CorruptIndex("r_pointer rows do not sum to offset")
        if int(self.offset.sum()) != self.a:
            raise CorruptIndex("offset total does not match index length")
        row_positions(self.index, self.r_pointer, self.R)

    def positions(self) -> np.ndarray:
        """(a, 3) array of (c, kh, kw) for every stored entry."""
        kw = row_positions(self.index, self.r_pointer, self.R)
        rows = np.repeat(np.arange(self.C * self.R), self.r_pointer)
        return np.stack([rows // self.R, rows % self.R, kw], axis=1)


@dataclass
class CompressedFc:
    M: int
    index: np.ndarray       # (entries,) 4-bit steps
    values: np.ndarray      # (entries,)
    row_starts: np.ndarray  # (F+1,) entry range per matrix row

    @property
    def F(self) -> int:
        return int(self.row_starts.size - 1)

    @property
    def entries(self) -> int:
        return int(self.index.size)

    def row_columns(self, f: int) -> np.ndarray:
        lo, hi = self.row_starts[f], self.row_starts[f + 1]
        steps = self.index[lo:hi]
        return np.cumsum(steps + 1) - 1


@dataclass(frozen=True)
class SharedMask:
    mask: np.ndarray  # (C, R, R) bool

    @property
    def nnz(self) -> int:
        return int(self.mask.sum())


def row_positions(index: np.ndarray, r_pointer: np.ndarray, R: int) -> np.ndarray:
    """Decode the in-row column of every entry; validates monotonicity and bounds."""
    index = np.asarray(index, dtype=np.int64)
    out = np.empty(index.size, dtype=np.int64)
    i = 0
    for n in np.asarray(r_pointer, dtype=np.int64):
        pos = -1
        for _ in range(int(n)):
            if i >= index.size:
                raise CorruptIndex("r_pointer references more entries than index holds")
            pos += int(index[i]) + 1
            if pos >= R:
                raise CorruptIndex(f"decoded column {pos} outside kernel width {R}")
            out[i] = pos
            i += 1
    if i != index.size:
        raise CorruptIndex("index has entries not covered by r_pointer")
    return out


def validate_group_pattern(kernels) -> SharedMask:
    k = _as_array(kernels)
    if k.ndim != 4 or k.shape[0] < 1 or k.shape[2] != k.shape[3]:
        raise ShapeMismatch(f"expected (N, C, R, R) kernels, got {k.shape}")
    mask = k[0] != 0
    for kid in range(1, k.shape[0]):
        diff = (k[kid] != 0) != mask
        if diff.any():
            raise PatternMismatch(kid, np.argwhere(diff)[0])
    return SharedMask(mask)


def encode_conv_group(kernels, group_size: int | None = None) -> CompressedGroup:
    """Encode one group of kernels; pads with zero kernels up to ``group_size``."""
    k = _as_array(kernels)
    mask = validate_group_pattern(k).mask
    n, C, R, _ = k.shape
    if R > MAX_STEP:
        raise RowTooWide(f"kernel width {R} exceeds {MAX_STEP}")
    group_size = n if group_size is None else group_size
    if group_size < n:
        raise ValueError(f"{n} kernels do not fit a group of {group_size}")

    index, r_pointer = [], []
    for c in range(C):
        for kh in range(R):
            cols = np.flatnonzero(mask[c, kh])
            r_pointer.append(cols.size)
            prev = -1
            for col in cols:
                index.append(int(col) - prev - 1)
                prev = int(col)
    r_pointer = np.array(r_pointer, dtype=np.int64)
    offset = r_pointer.reshape(C, R).sum(axis=1)
    if np.any(offset > MAX_OFFSET):
        raise RowTooWide("channel entry count exceeds 16-bit offset")
    values = np.zeros((group_size, int(offset.sum())), dtype=np.int64)
    # C-order flatten of the mask matches the (c, kh, kw) entry order
    values[:n] = k.reshape(n, -1)[:, mask.reshape(-1)]
    return CompressedGroup(group_size, C, R, np.array(index, dtype=np.int64),
                           r_pointer, offset.astype(np.int64), values)


def decode_conv_group(g: CompressedGroup) -> np.ndarray:
    g.check()
    out = np.zeros((g.group_size, g.C, g.R, g.R), dtype=np.int64)
    if g.a:
        p = g.positions()
        out[:, p[:, 0], p[:, 1], p[:, 2]] = g.values
    return out


def encode_conv_layer(kernels, group_size: int) -> list[CompressedGroup]:
    """Split F kernels into ceil(F/N) groups; the last is zero-padded."""
    k = _as_array(kernels)
    groups = []
    for s in range(0, k.shape[0], group_size):
        try:
            groups.append(encode_conv_group(k[s:s + group_size], group_size))
        except PatternMismatch as e:
            # report the kernel's index within the layer, not the group
            raise PatternMismatch(s + e.kernel_id, e.position) from None
    return groups


def decode_conv_layer(groups: list[CompressedGroup], F: int) -> np.ndarray:
    return np.concatenate([decode_conv_group(g) for g in groups])[:F]


def storage_count(g: CompressedGroup) -> int:
    return 2 * g.a + g.R * g.C + g.C


def encode_fc(wmat, M: int) -> CompressedFc:
    W = _as_array(wmat)
    if W.ndim != 2:
        raise ShapeMismatch(f"expected (F, C) matrix, got {W.shape}")
    index, values, starts = [], [], [0]
    for row in W:
        prev = -1
        for col in np.flatnonzero(row):
            step = int(col) - prev - 1
            while step > MAX_STEP:
                index.append(MAX_STEP)
                values.append(0)
                step -= MAX_STEP + 1
            index.append(step)
            values.append(int(row[col]))
            prev = int(col)
        starts.append(len(index))
    return CompressedFc(M, np.array(index, dtype=np.int64), np.array(values, dtype=np.int64),
                        np.array(starts, dtype=np.int64))


def decode_fc(f: CompressedFc, F: int, C: int) -> np.ndarray:
    if f.F != F:
        raise CorruptIndex(f"row_starts covers {f.F} rows, expected {F}")
    if np.any(f.index < 0) or np.any(f.index > MAX_STEP):
        raise CorruptIndex("index entry outside 4-bit range")
    if f.row_starts[0] != 0 or f.row_starts[-1] != f.entries or np.any(np.diff(f.row_starts) < 0):
        raise CorruptIndex("row_starts is not a monotone cover of the entries")
    out = np.zeros((F, C), dtype=np.int64)
    for r in range(F):
        cols = f.row_columns(r)
        if cols.size and cols[-1] >= C:
            raise CorruptIndex(f"row {r}: decoded column {cols[-1]} >= {C}")
        lo, hi = f.row_starts[r], f.row_starts[r + 1]
        out[r, cols] = f.values[lo:hi]
    return out


def group_prune(kernels, group_size: int, target_density: float) -> np.ndarray:
    """Shape-wise prune: zero the least important shared positions per group.

    Importance is the group-summed |w| per (c, kh, kw). ``ceil(d * C*R*R)``
    positions survive in each group. A surviving position where any kernel
    already holds a zero is dropped too, so every group validates.
    """
    if not 0 < target_density <= 1:
        raise ValueError("target_density must be in (0, 1]")
    k = _as_array(kernels).copy()
    F = k.shape[0]
    P = int(np.prod(k.shape[1:]))
    keep = min(P, math.ceil(target_density * P - 1e-9))
    for s in range(0, F, group_size):
        grp = k[s:s + group_size].reshape(-1, P)
        score = np.abs(grp).sum(axis=0)
        # stable sort: ties resolve to the lower flat position
        order = np.argsort(-score, kind="stable")
        survive = np.zeros(P, dtype=bool)
        survive[order[:keep]] = True
        survive &= np.all(grp != 0, axis=0)
        grp[:, ~survive] = 0
        k[s:s + group_size] = grp.reshape(k[s:s + group_size].shape)
    return k
