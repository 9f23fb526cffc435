"""Vector Generator Module: two activation registers and a tap selector.

REG1 is filled from the input buffer while REG0 feeds the PE array. On every
kernel-row change REG0 reloads from REG1 and a cursor restarts at 0. Each
select first advances the cursor by the weight's step index, emits the
activations under the tap pattern, then advances one more position for the
consumed weight slot, so the cursor always equals ``kw + jump``.

The tap pattern is ``[0, S, 2S, ...]`` for a single row segment. For block
mappings (several output rows per PU) the register holds one segment per
row and the taps address into each one.
"""

from __future__ import annotations

import numpy as np

from swsim.errors import LengthMismatch, SelectOverrun


def row_depth(lanes: int, S: int, R: int) -> int:
    return (lanes - 1) * S + R


def row_taps(lanes: int, S: int) -> np.ndarray:
    return np.arange(lanes, dtype=np.int64) * S


class Vgm:
    def __init__(self, depth: int, taps: np.ndarray, R: int):
        taps = np.asarray(taps, dtype=np.int64)
        if taps.size and taps.max() + R > depth:
            raise ValueError("tap pattern does not fit the register depth")
        self.depth = depth
        self.taps = taps
        self.R = R
        self.reg0 = np.zeros(depth, dtype=np.int64)
        self.reg1 = np.zeros(depth, dtype=np.int64)
        self.cursor = 0
        self.kh_row = -1
        self.loads = 0
        self.reloads = 0
        self.selects = 0

    @classmethod
    def for_row(cls, lanes: int, S: int, R: int) -> "Vgm":
        return cls(row_depth(lanes, S, R), row_taps(lanes, S), R)

    @classmethod
    def for_block(cls, rows: int, cols: int, S: int, R: int) -> "Vgm":
        seg = row_depth(cols, S, R)
        taps = (np.arange(rows)[:, None] * seg + np.arange(cols)[None, :] * S).reshape(-1)
        return cls(rows * seg, taps, R)

    @property
    def lanes(self) -> int:
        return int(self.taps.size)

    def load(self, segment) -> None:
        seg = np.asarray(segment, dtype=np.int64)
        if seg.shape != (self.depth,):
            raise LengthMismatch(f"segment of {seg.size} activations, register depth {self.depth}")
        self.reg1 = seg.copy()
        self.loads += 1

    def reload(self) -> None:
        self.reg0 = self.reg1.copy()
        self.cursor = 0
        self.kh_row += 1
        self.reloads += 1

    def select(self, step: int) -> np.ndarray:
        pos = self.cursor + int(step)
        if pos >= self.R:
            raise SelectOverrun(f"cursor {pos} past kernel width {self.R}")
        self.cursor = pos + 1
        self.selects += 1
        return self.reg0[pos + self.taps]
