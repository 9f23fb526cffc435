import numpy as np
import pytest
from hypothesis import given, strategies as st

import brute
from swsim.errors import LengthMismatch, SelectOverrun
from swsim.nn_model import LayerSpec, Tensor
from swsim.scheduler import SimConfig, _passes, run_conv_layer, tile_plan
from swsim.sparse_format import encode_conv_layer
from swsim.vgm import Vgm, row_depth

X6 = np.arange(10, 16)


def test_depth():
    assert row_depth(4, 1, 3) == 6
    assert Vgm.for_row(3, 2, 3).depth == 7


def test_load_replaces_reg1_only():
    v = Vgm.for_row(4, 1, 3)
    v.load(X6)
    assert v.reg1.tolist() == X6.tolist()
    assert not v.reg0.any()
    v.load(X6 + 1)
    assert v.reg1.tolist() == (X6 + 1).tolist()
    with pytest.raises(LengthMismatch):
        v.load(np.arange(5))


def test_reload_is_a_copy():
    v = Vgm.for_row(4, 1, 3)
    v.load(X6)
    v.reload()
    assert v.reg0.tolist() == X6.tolist() and v.cursor == 0
    v.reload()
    assert v.reg0.tolist() == X6.tolist()


def test_select_examples():
    v = Vgm.for_row(4, 1, 3)
    v.load(X6)
    v.reload()
    assert v.select(1).tolist() == [11, 12, 13, 14]
    v.reload()
    assert v.select(0).tolist() == [10, 11, 12, 13]
    s2 = Vgm.for_row(3, 2, 3)
    s2.load(np.arange(7))
    s2.reload()
    assert s2.select(0).tolist() == [0, 2, 4]


def test_select_overrun():
    v = Vgm.for_row(4, 1, 3)
    v.load(X6)
    v.reload()
    v.select(1)
    with pytest.raises(SelectOverrun):
        v.select(1)


def test_trace_on_short_row():
    # 1x8 input row, R=3, S=1, 4 lanes: one register fill per lane group
    x = np.concatenate([np.arange(1, 9), [0, 0]])
    mask = [True, False, True]
    got = []
    for base in (0, 4):
        v = Vgm.for_row(4, 1, 3)
        v.load(x[base:base + 6])
        v.reload()
        steps = [0, 1]
        got += [v.select(s).tolist() for s in steps]
    want = []
    for base in (0, 4):
        want += [[int(x[a]) for a in addr]
                 for addr in brute.selected_addresses(mask, base, 4, 1)]
    assert got == want


@given(st.lists(st.booleans(), min_size=1, max_size=15), st.integers(1, 6), st.integers(1, 3),
       st.integers(0, 2 ** 32 - 1))
def test_address_equivalence(row_mask, lanes, S, seed):
    R = len(row_mask)
    rng = np.random.default_rng(seed)
    v = Vgm.for_row(lanes, S, R)
    data = rng.integers(-99, 99, size=v.depth)
    v.load(data)
    v.reload()
    prev = -1
    got = []
    for pos in np.flatnonzero(row_mask):
        got.append(v.select(int(pos - prev - 1)).tolist())
        prev = pos
    want = [[int(data[a]) for a in addr] for addr in brute.selected_addresses(row_mask, 0, lanes, S)]
    assert got == want
    assert v.loads == 1


def test_block_taps_address_each_row_segment():
    v = Vgm.for_block(rows=2, cols=3, S=1, R=2)
    seg = row_depth(3, 1, 2)
    v.load(np.concatenate([np.arange(seg), 100 + np.arange(seg)]))
    v.reload()
    assert v.select(1).tolist() == [1, 2, 3, 101, 102, 103]


def test_reloads_per_tile_pass(rng):
    cfg = SimConfig(N=2, M=4, psb_bytes=16)
    layer = LayerSpec.conv(F=3, C=2, U=6, V=8, R=3)
    w = rng.integers(1, 9, size=layer.weight_shape)
    groups = encode_conv_layer(w, cfg.N)
    _, st_ = run_conv_layer(layer, groups, Tensor(rng.integers(-9, 9, size=layer.input_shape)), cfg)
    plan = tile_plan(layer, cfg)
    passes = sum(len(_passes(layer, cfg, oh, rows)) for oh, rows in plan.tiles())
    # every (group, pass) sweeps C channels with one reload per kernel row
    assert st_.vgm_reloads == len(groups) * passes * layer.R * layer.C
    assert st_.vgm_loads == st_.vgm_reloads
