"""Sup error of the van der Pol surrogate (eps_c = 0) along refined Chebyshev grids.

    python3 scripts/convergence_study.py [--d 121 225 441 961 1681] [--per-axis 100]
"""
import argparse

from kedmd_mpc import convergence_study, van_der_pol
from kedmd_mpc.analysis import default_test_set


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--d", type=int, nargs="+", default=[121, 225, 441, 961, 1681])
    p.add_argument("--per-axis", type=int, default=100)
    p.add_argument("--eps-c", type=float, default=0.0)
    args = p.parse_args()
    plant = van_der_pol()
    test = default_test_set(plant.domain, plant.control_box, per_axis=args.per_axis)
    study = convergence_study(plant, args.d, test, eps_c=args.eps_c)
    print("d,h_X,sup_error,sup_ratio")
    for d, h, e, r in study.rows():
        print(f"{d},{h:.6g},{e:.6g},{r:.6g}")
    print(f"log-log slope {study.slope:.4f} (residual {study.residual:.3g})")


if __name__ == "__main__":
    main()
