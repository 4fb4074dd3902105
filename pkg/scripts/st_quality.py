"""PSNR of the iterative solver on rendered constant-slope EPIs.

Usage: python scripts/st_quality.py [--f-max 0.08] [--seeds 4] [--iterations 100]
"""
import argparse

import numpy as np

from shearlf.lightfield import psnr
from shearlf.shearlet import build_system
from shearlf.solver import SolverConfig, st_reconstruct
from shearlf.synth import random_texture, render_epi


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--f-max", type=float, default=0.08)
    ap.add_argument("--slope", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=4)
    ap.add_argument("--iterations", type=int, default=100)
    args = ap.parse_args()

    sys_ = build_system(128, 384, 4)
    rows = [16, 32, 48]
    mask = np.zeros(sys_.shape)
    mask[rows] = 1.0
    held = [r for r in range(17, 48) if r not in rows]
    for seed in range(args.seeds):
        dense = render_epi(random_texture(seed, f_max=args.f_max), 128, 384, args.slope)
        for dore in (False, True):
            res = []
            out = st_reconstruct(sys_, dense * mask, mask, SolverConfig(args.iterations, dore=dore),
                                 callback=lambda k, lam, r: res.append(r))
            score = psnr(out[held, 38:346], dense[held, 38:346])
            print(f"seed {seed} dore={dore!s:5} psnr {score:6.2f} dB  final residual {res[-1]:.3e}")


if __name__ == "__main__":
    main()
