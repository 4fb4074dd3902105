"""Time 100 solver iterations against one network pass per colour EPI.

Usage: python scripts/bench.py [--width 1280] [--repeats 3]
"""
import argparse

from shearlf.pipeline import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--width", type=int, default=1280)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    r = bench(width=args.width, repeats=args.repeats)
    print(f"canvas {r['canvas']}: ST {r['st_ms']:.0f} ms, DRST {r['drst_ms']:.0f} ms, {r['speedup']:.1f}x")
    print(f"reference {r['reference']}")


if __name__ == "__main__":
    main()
