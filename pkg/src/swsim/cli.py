"""Command-line entry point: ``swsim {encode,run,gen-fixture,sweep}``.

Exit codes: 0 success, 1 validation failure, 2 I/O or format error,
3 verification mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from swsim import container, perf
from swsim.errors import FormatError, PatternMismatch, ShapeMismatch, SimError
from swsim.nn_model import LayerKind, ModelSpec, Tensor, reference_network, signed_range
from swsim.pe_array import PrecisionMode
from swsim.scheduler import SimConfig, run_network
from swsim.sparse_format import (decode_conv_layer, decode_fc, encode_conv_layer, encode_fc,
                                 group_prune, storage_count)

log = logging.getLogger("swsim")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_MISMATCH = 0, 1, 2, 3


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"--config expects k=v, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def make_config(overrides: dict) -> SimConfig:
    base = SimConfig()
    mode = overrides.get("mode")
    if mode and PrecisionMode(mode.lower()) is PrecisionMode.INT8_DUAL:
        base = SimConfig.int8()
    return base.override(**overrides)


def layer_file(directory, k: int) -> Path:
    return Path(directory) / f"layer{k:02d}.swt"


def encode_model(model: ModelSpec, dense: list, cfg: SimConfig, prune: float | None = None):
    """Compress per-layer dense weights; returns (weights, summary rows)."""
    weights, rows = [], []
    for k, (layer, w) in enumerate(zip(model.layers, dense)):
        if layer.kind is LayerKind.MAXPOOL:
            weights.append(None)
            continue
        arr = w.data
        if layer.kind is LayerKind.CONV:
            if prune is not None:
                arr = group_prune(arr, cfg.N, prune)
            groups = encode_conv_layer(arr, cfg.N)
            weights.append(groups)
            count = sum(storage_count(g) for g in groups)
        else:
            if prune is not None:
                arr = prune_fc(arr, prune)
            fc = encode_fc(arr, cfg.M)
            weights.append(fc)
            count = 2 * fc.entries + fc.F + 1
        rows.append((k, layer.kind.value, float(np.count_nonzero(arr) / arr.size), count))
    return weights, rows


def prune_fc(wmat: np.ndarray, density: float) -> np.ndarray:
    """Keep the ceil(density*C) largest-magnitude weights of every row."""
    w = np.array(wmat, dtype=np.int64)
    keep = max(1, math.ceil(density * w.shape[1] - 1e-9))
    order = np.argsort(-np.abs(w), axis=1, kind="stable")
    drop = order[:, keep:]
    np.put_along_axis(w, drop, 0, axis=1)
    return w


def decoded_dense(model: ModelSpec, weights: list) -> list:
    out = []
    for layer, w in zip(model.layers, weights):
        if layer.kind is LayerKind.CONV:
            out.append(Tensor(decode_conv_layer(w, layer.F), 32))
        elif layer.kind is LayerKind.FC:
            out.append(Tensor(decode_fc(w, layer.F, layer.C), 32))
        else:
            out.append(None)
    return out


def cmd_encode(args) -> int:
    model = container.read_model(args.model)
    cfg = make_config(parse_overrides(args.config))
    if args.N is not None:
        cfg = cfg.override(N=args.N)
    dense = []
    for k, layer in enumerate(model.layers):
        if layer.kind is LayerKind.MAXPOOL:
            dense.append(None)
            continue
        t = container.read_tensor(layer_file(args.weights, k))
        if t.shape != layer.weight_shape:
            raise ShapeMismatch(f"layer {k}: weights {t.shape} != {layer.weight_shape}")
        dense.append(t)
    try:
        weights, rows = encode_model(model, dense, cfg, args.prune)
    except PatternMismatch as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    width = 8 if cfg.mode is PrecisionMode.INT8_DUAL else 16
    container.write_swsc(args.out, model.layers, weights, width)
    print(f"{'layer':>5} {'kind':>7} {'density':>8} {'storage':>9}")
    for k, kind, d, count in rows:
        print(f"{k:>5} {kind:>7} {d:>8.4f} {count:>9}")
    print(f"wrote {args.out}")
    return EXIT_OK


def load_manifest(args) -> dict:
    m = {}
    if args.manifest:
        try:
            m = yaml.safe_load(Path(args.manifest).read_text()) or {}
        except OSError as e:
            raise FormatError(f"cannot read manifest: {e}") from e
        base = Path(args.manifest).parent
        for key in ("model", "weights", "input", "out"):
            if key in m and m[key] is not None and not Path(m[key]).is_absolute():
                m[key] = str(base / m[key])
    for key in ("model", "weights", "input", "out", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            m[key] = val
    cfg = dict(m.get("config") or {})
    cfg.update(parse_overrides(args.config))
    m["config"] = cfg
    for key in ("model", "weights", "input"):
        if not m.get(key):
            raise FormatError(f"missing {key} path (flag or manifest)")
    return m


def cmd_run(args) -> int:
    man = load_manifest(args)
    cfg = make_config({k: str(v) for k, v in man["config"].items()})
    model = container.read_model(man["model"])
    headers, weights, _ = container.read_swsc(man["weights"])
    container.check_container(model.layers, headers)
    for k, h in enumerate(headers):
        if h[0] is LayerKind.CONV and h[7] != cfg.N:
            raise FormatError(f"layer {k}: container grouped for N={h[7]}, config N={cfg.N}")
    x = container.read_tensor(man["input"])
    out, report, outs = run_network(model.layers, weights, x, cfg, return_all=True)

    print(f"images/s      {report.images_per_s:.3f}")
    print(f"total cycles  {report.total_cycles}")
    print(f"peak GOP/s    {report.peak_gops:.1f}")
    print(f"{'layer':>5} {'kind':>7} {'cycles':>10} {'DMI':>7} {'DAI':>7} {'GOP/s':>9}")
    for p in report.per_layer:
        dmi_s = f"{p.dmi:.4f}" if p.dmi is not None else "-"
        print(f"{p.index:>5} {p.kind:>7} {p.cycles:>10} {dmi_s:>7} {p.dai:>7.4f} "
              f"{p.effective_gops:>9.3f}{'  (' + p.note + ')' if p.note else ''}")

    status = EXIT_OK
    verified = None
    if args.verify:
        ref = reference_network(model.layers, decoded_dense(model, weights), x, act_width=cfg.A)
        bad = [k for k, (a, b) in enumerate(zip(outs, ref)) if a != b]
        verified = not bad
        if bad:
            print(f"MISMATCH at layer(s) {bad}")
            status = EXIT_MISMATCH
        else:
            print("VERIFIED bit-exact")
    if man.get("out"):
        doc = report.to_dict()
        doc["verified"] = verified
        Path(man["out"]).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(f"report written to {man['out']}")
    return status


def _random_nonzero(rng, shape, bound):
    mag = rng.integers(1, bound + 1, size=shape)
    sign = rng.choice(np.array([-1, 1]), size=shape)
    return mag * sign


def make_input(rng, shape, act_sparsity: float, bound: int) -> np.ndarray:
    """Nonnegative activations with exactly round(act_sparsity * numel) zeros."""
    x = np.zeros(int(np.prod(shape)), dtype=np.int64)
    n_zero = round(act_sparsity * x.size)
    nz = rng.permutation(x.size)[n_zero:]
    x[nz] = rng.integers(1, bound + 1, size=nz.size)
    return x.reshape(shape)


def cmd_gen_fixture(args) -> int:
    if not 0 < args.density <= 1 or not 0 <= args.act_sparsity < 1:
        print("error: need 0 < density <= 1 and 0 <= act-sparsity < 1", file=sys.stderr)
        return EXIT_VALIDATION
    model = container.read_model(args.model)
    cfg = make_config(parse_overrides(args.config))
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    (out / "dense").mkdir(parents=True, exist_ok=True)
    (out / "pruned").mkdir(exist_ok=True)
    width = 8 if cfg.mode is PrecisionMode.INT8_DUAL else 16
    wbound = min(signed_range(cfg.B)[1], 127)
    abound = min(signed_range(cfg.A)[1], 255)

    dense, pruned = [], []
    for k, (layer, d) in enumerate(zip(model.layers, model.densities)):
        if layer.kind is LayerKind.MAXPOOL:
            dense.append(None)
            pruned.append(None)
            continue
        density = args.density if d is None else d
        w = _random_nonzero(rng, layer.weight_shape, wbound)
        if layer.kind is LayerKind.CONV:
            p = group_prune(w, cfg.N, density)
        else:
            p = prune_fc(w, density)
        dense.append(Tensor(w, width))
        pruned.append(Tensor(p, width))
        container.write_tensor(layer_file(out / "dense", k), dense[-1])
        container.write_tensor(layer_file(out / "pruned", k), pruned[-1])

    weights, rows = encode_model(model, pruned, cfg)
    container.write_swsc(out / "weights.swsc", model.layers, weights, width)

    first = model.layers[0]
    shape = first.input_shape
    if len(shape) == 3:
        shape = (shape[0], shape[1] - 2 * first.pad, shape[2] - 2 * first.pad)
    x = make_input(rng, shape, args.act_sparsity, abound)
    container.write_tensor(out / "input.swt", Tensor(x, width))
    manifest = {"model": str(Path(args.model).resolve()), "weights": "weights.swsc",
                "input": "input.swt", "out": "report.json", "seed": args.seed,
                "config": {k: v for k, v in parse_overrides(args.config).items()}}
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=True))
    print(f"fixture written to {out} ({len(rows)} weight layers, "
          f"input zero fraction {perf.dai(x):.4f})")
    return EXIT_OK


def sweep_rows(model: ModelSpec, Ns, Ms, modes, base: SimConfig | None = None) -> list[dict]:
    base = base or SimConfig()
    rows = []
    for mode in modes:
        for N in Ns:
            for M in Ms:
                if PrecisionMode(mode) is PrecisionMode.INT8_DUAL:
                    cfg = SimConfig.int8(N=N, M=M, clock_hz=base.clock_hz, bus_bits=base.bus_bits)
                else:
                    cfg = base.override(N=N, M=M, mode=mode)
                res = perf.resource_estimate(cfg)
                row = {"N": N, "M": M, "mode": cfg.mode.value,
                       "peak_gops": perf.peak_throughput(cfg) / 1e9,
                       "dsp": res.dsp, "dsp_exceeds_device": res.exceeds_device,
                       "fc_knee_pes": perf.fc_knee(cfg.bus_bits, cfg.B)}
                for k, layer in enumerate(model.layers):
                    if layer.kind is LayerKind.CONV:
                        row[f"dmi_L{k}"] = perf.dmi(layer, cfg.lanes)
                    elif layer.kind is LayerKind.FC:
                        row[f"fc_gops_L{k}"] = perf.roofline(layer, cfg) / 1e9
                rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    model = container.read_model(args.model)
    base = make_config(parse_overrides(args.config))
    rows = sweep_rows(model, args.N, args.M, args.mode, base)
    cols = list(rows[0])
    print(",".join(cols))
    for r in rows:
        print(",".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols))
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--config", action="append", default=[], metavar="K=V",
                        help="override a SimConfig field (repeatable)")

    e = sub.add_parser("encode", help="compress dense per-layer weights into an SWSC container")
    e.add_argument("--model", required=True)
    e.add_argument("--weights", required=True, help="directory of layerNN.swt dense tensors")
    e.add_argument("--N", type=int, default=None, help="group size (PU count)")
    e.add_argument("--prune", type=float, default=None, metavar="DENSITY")
    e.add_argument("--out", required=True)
    common(e)
    e.set_defaults(func=cmd_encode)

    r = sub.add_parser("run", help="simulate a network and write a performance report")
    r.add_argument("--manifest")
    r.add_argument("--model")
    r.add_argument("--weights")
    r.add_argument("--input")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--verify", action="store_true", help="compare against the dense oracle")
    common(r)
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gen-fixture", help="generate synthetic pruned weights and inputs")
    g.add_argument("--model", required=True)
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--act-sparsity", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    common(g)
    g.set_defaults(func=cmd_gen_fixture)

    s = sub.add_parser("sweep", help="tabulate analytic metrics over configurations")
    s.add_argument("--model", required=True)
    s.add_argument("--N", type=_int_list, default=[48])
    s.add_argument("--M", type=_int_list, default=[28])
    s.add_argument("--mode", type=lambda x: x.split(","), default=["fixed16"])
    s.add_argument("--out")
    common(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except PatternMismatch as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, ShapeMismatch, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (SimError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
