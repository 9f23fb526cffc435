"""Acceptance criteria 1-9, each checked at its stated tolerance.

Run alone with ``pytest tests/test_acceptance.py``; the terminal summary
lists one PASS/FAIL line per criterion.
"""

import time
from fractions import Fraction

import numpy as np

import brute
from factories import sparse_conv, sparse_fc
from swsim.nn_model import LayerSpec, Tensor, conv_reference, fc_reference
from swsim.perf import dmi, dmi_exact, fc_knee, fc_roofline, peak_throughput, resource_estimate
from swsim.scheduler import SimConfig, _passes, run_conv_layer, run_fc_layer, tile_plan
from swsim.sparse_format import (decode_conv_group, decode_fc, encode_conv_group,
                                 encode_conv_layer, encode_fc)

CLK = 200e6


def _random_cfg(rng, mode):
    N, M = int(rng.integers(1, 9)), int(rng.integers(2, 17))
    if mode == "int8dual":
        return SimConfig.int8(N=N, M=M, psb_bytes=64), 8
    return SimConfig(N=N, M=M, psb_bytes=64), 16


def test_c1_oracle_equivalence(acceptance):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    counts = {}
    bad = []
    for mode in ("fixed16", "int8dual"):
        n_conv = n_fc = 0
        for _ in range(200):
            cfg, bits = _random_cfg(rng, mode)
            F, C = (int(v) for v in rng.integers(1, 9, 2))
            U, V = (int(v) for v in rng.integers(1, 33, 2))
            layer = LayerSpec.conv(F=F, C=C, U=U, V=V, R=int(rng.choice([1, 3, 5])),
                                   S=int(rng.choice([1, 2])), relu=bool(rng.integers(2)))
            k, x = sparse_conv(rng, layer, cfg.N, float(rng.uniform(0.05, 1.0)),
                               float(rng.uniform(0, 0.6)), bits, bits)
            y, _ = run_conv_layer(layer, encode_conv_layer(k, cfg.N), x, cfg)
            n_conv += 1
            if y != conv_reference(layer, x, Tensor(k)):
                bad.append((mode, "conv", layer))
        for _ in range(100):
            cfg, bits = _random_cfg(rng, mode)
            F, C = int(rng.integers(1, 65)), int(rng.integers(1, 129))
            W, x = sparse_fc(rng, F, C, float(rng.uniform(0.02, 1.0)), bits)
            layer = LayerSpec.fc(F=F, C=C, relu=bool(rng.integers(2)))
            y, _ = run_fc_layer(layer, encode_fc(W, cfg.M), x, cfg)
            n_fc += 1
            if y != fc_reference(Tensor(W), x, relu=layer.relu):
                bad.append((mode, "fc", layer))
        counts[mode] = (n_conv, n_fc)
    took = time.perf_counter() - t0
    acceptance(1, not bad and took < 120,
               f"{counts} conv/fc layers bit-exact, {len(bad)} mismatches, {took:.1f}s")


def test_c2_codec_roundtrip(acceptance):
    rng = np.random.default_rng(7)
    groups = fcs = wide_gaps = 0
    ok = True
    for _ in range(500):
        n, C = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        R = int(rng.choice([1, 3, 5, 7, 11, 15]))
        mask = rng.random((C, R, R)) < rng.uniform(0, 1)
        k = rng.integers(1, 2 ** 15, size=(n, C, R, R)) * mask
        ok &= np.array_equal(decode_conv_group(encode_conv_group(k)), k)
        groups += 1
    for _ in range(500):
        F, C = int(rng.integers(1, 17)), int(rng.integers(17, 300))
        W = rng.integers(-2 ** 15, 2 ** 15, size=(F, C)) * (rng.random((F, C)) < 0.05)
        W[0, :] = 0
        W[0, [0, C - 1]] = 1  # forces a gap past the 4-bit step range
        f = encode_fc(W, 8)
        wide_gaps += int(np.count_nonzero(f.values == 0))
        ok &= np.array_equal(decode_fc(f, F, C), W)
        fcs += 1
    acceptance(2, bool(ok) and wide_gaps > 0,
               f"{groups} conv groups + {fcs} FC matrices exact, {wide_gaps} filler entries")


def test_c3_peak_throughput(acceptance):
    f16 = peak_throughput(SimConfig(N=48, M=28, clock_hz=CLK))
    i8 = peak_throughput(SimConfig.int8(N=48, M=28, clock_hz=CLK))
    ok = round(f16) == 537_600_000_000 and round(i8) == 1_075_200_000_000
    acceptance(3, ok, f"Fixed16 {f16 / 1e9:.1f} GOP/s, Int8Dual {i8 / 1e9:.1f} GOP/s")


def test_c4_dsp(acceptance):
    dsp = resource_estimate(SimConfig(N=48, M=28)).dsp
    acceptance(4, dsp == 1350, f"dsp = {dsp}")


ALEXNET = [(55, 11, 4), (27, 5, 1), (13, 3, 1)]


def test_c5_dmi(acceptance):
    vgg = [LayerSpec.conv(F=1, C=1, U=u, V=u, R=3) for u in (224, 112, 56, 28, 14)]
    vgg_ok = all(dmi(l, m) == 1.0 for l in vgg for m in (14, 28))
    rng = np.random.default_rng(5)
    cfg = SimConfig(N=2, M=28)
    errs = []
    for u, R, S in ALEXNET:
        layer = LayerSpec.conv(F=cfg.N, C=1, U=u, V=u, R=R, S=S)
        k, x = sparse_conv(rng, layer, cfg.N, 0.5, 0.4)
        _, st = run_conv_layer(layer, encode_conv_layer(k, cfg.N), x, cfg)
        measured = st.pe_cycles / (st.pe_cycles + st.idle_pe_slots)
        errs.append(abs(measured - dmi(layer, 28)))
    ok = vgg_ok and max(errs) <= 1e-12
    acceptance(5, ok, f"VGG all 1.0 at M=14,28: {vgg_ok}; AlexNet formula vs trace "
                      f"max |err| = {max(errs):.1e} (dmi "
                      + ", ".join(f"{float(dmi_exact(LayerSpec.conv(F=1, C=1, U=u, V=u, R=R, S=S), 28)):.4f}"
                                  for u, R, S in ALEXNET) + ")")


def test_c6_roofline(acceptance):
    k16, k8 = fc_knee(128, 16), fc_knee(128, 8)
    roof16 = [fc_roofline(p, 128, CLK, 16) for p in (2, 4, 8, 16, 32)]
    roof8 = [fc_roofline(p, 128, CLK, 8) for p in (2, 4, 8, 16, 32)]
    flat16 = roof16[2] == roof16[3] == roof16[4] and roof16[1] < roof16[2]
    flat8 = roof8[3] == roof8[4] and roof8[2] < roof8[3]
    ok = k16 == 8 and k8 == 16 and flat16 and flat8 and roof8[-1] == 2 * roof16[-1]
    acceptance(6, ok, f"knees at {k16:g} (16-bit) and {k8:g} (8-bit) PEs, "
                      f"roof ratio {roof8[-1] / roof16[-1]:g}")


def test_c7_tiling(acceptance):
    plan = tile_plan(LayerSpec.conv(F=1, C=1, U=224, V=224, R=3), SimConfig(M=28))
    eq1 = (plan.U_t, plan.H_t) == (64, 66)
    rng = np.random.default_rng(11)
    same, overlap = True, True
    for U, V, R, S, M, psb in [(20, 9, 3, 1, 4, 16), (17, 13, 5, 2, 4, 16), (12, 3, 3, 1, 8, 4),
                               (30, 31, 1, 1, 8, 16), (16, 16, 5, 1, 3, 32)]:
        layer = LayerSpec.conv(F=3, C=2, U=U, V=V, R=R, S=S)
        k, x = sparse_conv(rng, layer, 2, 0.6, 0.2)
        groups = encode_conv_layer(k, 2)
        tiled_cfg = SimConfig(N=2, M=M, psb_bytes=psb)
        tiled, st = run_conv_layer(layer, groups, x, tiled_cfg)
        whole, st1 = run_conv_layer(layer, groups, x, SimConfig(N=2, M=M, psb_bytes=1 << 16))
        same &= tiled == whole and st.tile_count > 1 and st1.tile_count == 1
        p = tile_plan(layer, tiled_cfg)
        spans = [p.input_rows(oh, r) for oh, r in p.tiles()]
        overlap &= all(a[1] - b[0] == R - S for a, b in zip(spans, spans[1:]))
    acceptance(7, eq1 and same and overlap,
               f"U_t={plan.U_t} H_t={plan.H_t}; tiled == untiled: {same}; overlap R-S: {overlap}")


def test_c8_cycle_proportionality(acceptance):
    rng = np.random.default_rng(8)
    layer = LayerSpec.conv(F=6, C=3, U=10, V=12, R=3)
    cfg = SimConfig(N=3, M=5)
    passes = sum(len(_passes(layer, cfg, oh, r)) for oh, r in tile_plan(layer, cfg).tiles())
    pts, residual = [], 0
    for d in np.linspace(0.1, 1.0, 10):
        k, x = sparse_conv(rng, layer, cfg.N, float(d))
        groups = encode_conv_layer(k, cfg.N)
        _, st = run_conv_layer(layer, groups, x, cfg)
        entries = sum(g.a for g in groups)
        # analytic model: one cycle per stored entry per output pass
        residual = max(residual, abs(st.compute_cycles - passes * entries))
        pts.append((entries, st.compute_cycles))
    slope = Fraction(pts[-1][1] - pts[0][1], pts[-1][0] - pts[0][0])
    affine = all(Fraction(c - pts[0][1]) == slope * (e - pts[0][0]) for e, c in pts)
    acceptance(8, residual == 0 and affine,
               f"slope {slope} cycles/entry over 10 densities, max residual {residual}")


def test_c9_gating(acceptance):
    rng = np.random.default_rng(396)
    cfg = SimConfig(N=4, M=8)
    layer = LayerSpec.conv(F=6, C=3, U=9, V=11, R=3, S=1)
    k, _ = sparse_conv(rng, layer, cfg.N, 0.5)
    x = np.ones(layer.input_shape, dtype=np.int64)
    flat = x.reshape(-1)
    flat[rng.permutation(flat.size)[:round(0.396 * flat.size)]] = 0
    groups = encode_conv_layer(k, cfg.N)
    _, st = run_conv_layer(layer, groups, Tensor(x), cfg)
    # independent count of the zero operands each real kernel multiplies
    zeros = total = 0
    xl = x.tolist()
    for f in range(layer.F):
        mask = k[(f // cfg.N) * cfg.N] != 0
        for c, kh, kw in np.argwhere(mask):
            for u in range(layer.U):
                for v in range(layer.V):
                    total += 1
                    zeros += xl[c][u + kh][v + kw] == 0
    ratio = Fraction(st.gated_pe_cycles, st.pe_cycles)
    acceptance(9, ratio == Fraction(zeros, total) and st.pe_cycles == total,
               f"gated/total = {float(ratio):.4f} = selected-zero fraction "
               f"(input zero fraction {np.mean(x == 0):.4f})")
