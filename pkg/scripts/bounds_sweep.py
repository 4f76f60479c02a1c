"""Sweep a rotation and print the full-band target, the low-pass target and
the sinc inter-resolution bound for a few decimation factors.

    python scripts/bounds_sweep.py --size 32 --steps 19
"""
import argparse
import math

import numpy as np

from rigidreg import bounds
from rigidreg.spectral import forward_dft, lowpass_cutoff
from rigidreg.target import FrequencyEvaluator, RigidMotion
from synthetic import blob_pair


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--steps", type=int, default=19)
    ap.add_argument("--m", default="2,4,8")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    n = args.size
    c = np.full(2, (n - 1) / 2.0)
    f, g = blob_pair(np.random.default_rng(args.seed), (n, n), RigidMotion.planar(0.4, (0, 0), c))
    ev = FrequencyEvaluator(forward_dft(f, 4), forward_dft(g, 4))
    F, G = forward_dft(f, 2), forward_dft(g, 2)
    ms = [int(x) for x in args.m.split(",")]
    low = {m: ev.restricted(lowpass_cutoff(m, f.period)) for m in ms}
    bound = {m: bounds.bound_sinc(F, G, m).value for m in ms}

    print("theta_deg,q_high," + ",".join(f"q_low_m{m},bound_m{m},inside_m{m}" for m in ms))
    for theta in np.linspace(-math.pi, math.pi, args.steps):
        mo = RigidMotion.planar(theta, (0, 0), c)
        qh = ev(mo).value
        cols = []
        for m in ms:
            ql = low[m](mo).value
            cols += [f"{ql:.4f}", f"{bound[m]:.4f}", str(abs(qh - ql) <= bound[m])]
        print(f"{math.degrees(theta):.1f},{qh:.4f}," + ",".join(cols))


if __name__ == "__main__":
    main()
