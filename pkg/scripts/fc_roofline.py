"""FC throughput against engaged PE count, analytic roof and simulated.

Each point runs a dense FC layer on a single PU of M PEs and reports the
measured GOP/s next to the roofline bound. The knee sits where the bus
stops keeping up: bus_bits / B PEs.

    python3 scripts/fc_roofline.py --pes 2,4,8,16,32 --bits 16,8
"""

import argparse
import csv
import sys

import numpy as np

from swsim.nn_model import LayerSpec, Tensor
from swsim.perf import fc_knee, fc_roofline
from swsim.scheduler import SimConfig, run_fc_layer
from swsim.sparse_format import encode_fc


def simulate(pes: int, bits: int, F: int, C: int, bus: int, clk: float, rng) -> float:
    hi = 2 ** (bits - 1) - 1
    W = rng.integers(1, hi, size=(F, C))
    x = Tensor(rng.integers(1, hi, size=C), 8 if bits <= 8 else 16)
    cfg = SimConfig(N=1, M=pes, A=bits, B=bits, bus_bits=bus, clock_hz=clk)
    _, st = run_fc_layer(LayerSpec.fc(F=F, C=C), encode_fc(W, pes), x, cfg)
    return 2 * st.useful_macs / (st.total_cycles / clk)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pes", default="2,4,8,16,32")
    ap.add_argument("--bits", default="16,8")
    ap.add_argument("--bus", type=int, default=128)
    ap.add_argument("--clock", type=float, default=200e6)
    ap.add_argument("--F", type=int, default=64)
    ap.add_argument("--C", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    out = csv.writer(sys.stdout)
    out.writerow(["bits", "pes", "knee_pes", "roof_gops", "measured_gops"])
    for bits in (int(b) for b in args.bits.split(",")):
        for p in (int(v) for v in args.pes.split(",")):
            roof = fc_roofline(p, args.bus, args.clock, bits) / 1e9
            meas = simulate(p, bits, args.F, args.C, args.bus, args.clock, rng) / 1e9
            out.writerow([bits, p, f"{fc_knee(args.bus, bits):g}", f"{roof:.3f}", f"{meas:.3f}"])


if __name__ == "__main__":
    main()
