"""Mapping efficiency per conv layer across PE-per-PU counts.

Prints the analytic DMI for every conv layer of a model spec and, with
--simulate, the measured ratio from a small single-channel run of the same
output shape.

    python3 scripts/dmi_sweep.py configs/vgg16.yaml --M 7,14,28,32
    python3 scripts/dmi_sweep.py configs/alexnet.yaml --M 28 --simulate
"""

import argparse
import csv
import sys

import numpy as np

from swsim.container import read_model
from swsim.nn_model import LayerKind, LayerSpec, Tensor
from swsim.perf import dmi
from swsim.scheduler import SimConfig, run_conv_layer
from swsim.sparse_format import encode_conv_layer


def measured_dmi(layer: LayerSpec, M: int, rng) -> float:
    probe = LayerSpec.conv(F=1, C=1, U=layer.U, V=layer.V, R=layer.R, S=layer.S)
    cfg = SimConfig(N=1, M=M)
    k = rng.integers(1, 100, size=probe.weight_shape)
    x = Tensor(rng.integers(-100, 100, size=probe.input_shape))
    _, st = run_conv_layer(probe, encode_conv_layer(k, 1), x, cfg)
    return st.pe_cycles / (st.pe_cycles + st.idle_pe_slots)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model")
    ap.add_argument("--M", default="7,14,28,32")
    ap.add_argument("--simulate", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    Ms = [int(m) for m in args.M.split(",")]
    model = read_model(args.model)
    rng = np.random.default_rng(args.seed)
    out = csv.writer(sys.stdout)
    out.writerow(["layer", "U", "V", "R", "S", "M", "dmi", "dmi_measured"])
    for k, layer in enumerate(model.layers):
        if layer.kind is not LayerKind.CONV:
            continue
        for M in Ms:
            meas = f"{measured_dmi(layer, M, rng):.6f}" if args.simulate else ""
            out.writerow([k, layer.U, layer.V, layer.R, layer.S, M, f"{dmi(layer, M):.6f}", meas])


if __name__ == "__main__":
    main()
