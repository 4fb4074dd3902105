"""Overfit the residual network on one mini-batch and print the loss curve.

Usage: python scripts/overfit_smoke.py [--steps 200] [--lr 1e-2] [--plan 8,16,32,64]
"""
import argparse
import tempfile
import time

import numpy as np

from shearlf.lightfield import DisparityConfig
from shearlf.nn import ChannelPlan
from shearlf.shearlet import build_system
from shearlf.synth import random_texture, render_planar_lightfield
from shearlf.trainer import overfit_smoke, prepare_training_set


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--plan", default="8,16,32,64")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    sslfs = []
    for _ in range(2):
        d = rng.uniform(-3, 3)
        tex = [[random_texture(rng, 30, 0.1) for _ in range(3)] for _ in range(2)]
        sslfs.append((render_planar_lightfield(tex, 9, 512, d, supersample=4), DisparityConfig(d - 1.5, d + 1.5)))
    with tempfile.TemporaryDirectory() as tmp:
        store = prepare_training_set(sslfs, 16, tmp)
        plan = ChannelPlan(tuple(int(v) for v in args.plan.split(",")))
        t0 = time.perf_counter()
        losses = overfit_smoke(store, build_system(128, 384, 4), args.steps, args.lr, plan)
    print(f"{args.steps} steps in {time.perf_counter() - t0:.0f} s")
    every = max(1, len(losses) // 20)
    print(" ".join(f"{v / losses[0]:.3f}" for v in losses[::every]))
    print(f"reduction {losses[0] / losses[-1]:.1f}x")


if __name__ == "__main__":
    main()
