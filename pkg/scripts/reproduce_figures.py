"""Run both figure reproductions and print the closed-loop statistics.

    python3 scripts/reproduce_figures.py --out out/figures [--steps 1000] [--workers 1]
"""
import argparse
import time

from kedmd_mpc.cli import cmd_reproduce
from kedmd_mpc.pipeline import FIGURES, RunConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="out/figures")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figure", choices=FIGURES, action="append")
    args = p.parse_args()
    cfg = RunConfig(out=args.out, steps=args.steps, workers=args.workers, seed=args.seed)
    for fig in args.figure or FIGURES:
        t0 = time.perf_counter()
        summaries = cmd_reproduce(cfg, fig)
        print(f"{fig} ({time.perf_counter() - t0:.0f}s)")
        for name, s in summaries.items():
            print(f"  {name:<22s} decay slope {s.decay_slope:+.4f}  plateau {s.plateau:.3e}"
                  f"  flatness {s.flatness:+.3f}  final {s.final_norm:.3e}")


if __name__ == "__main__":
    main()
