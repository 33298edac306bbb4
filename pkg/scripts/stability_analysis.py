"""Growth bounds, alpha_N and the minimal stabilizing horizon for the exact plant.

    python3 scripts/stability_analysis.py [--grid 5] [--n-max 20]
"""
import argparse

import numpy as np

from kedmd_mpc import compute_alpha, compute_B_eps, estimate_growth_bounds, minimal_stabilizing_horizon
from kedmd_mpc.pipeline import RunConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", type=int, default=5)
    p.add_argument("--half-width", type=float, default=1.0)
    p.add_argument("--n-max", type=int, default=20)
    args = p.parse_args()
    cfg = RunConfig(exact_plant=True)
    g = np.linspace(-args.half_width, args.half_width, args.grid)
    xs = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    xs = xs[np.linalg.norm(xs, axis=1) > 0]
    cost = cfg.cost()
    B = estimate_growth_bounds(cfg.plant(), cost, cfg.ocp(), xs, args.n_max)
    print("N,B_N,alpha_N,B_eps(1e-3)")
    for N in range(1, args.n_max + 1):
        alpha = compute_alpha(B, N) if N >= 2 else float("nan")
        b_eps = compute_B_eps(B, N, 1.2, 1.0, 1e-3, cost.lambda_max, cost.lambda_min)
        print(f"{N},{B.B(N):.6g},{alpha:.6g},{b_eps:.6g}")
    print(f"minimal stabilizing horizon: {minimal_stabilizing_horizon(B)}")


if __name__ == "__main__":
    main()
