"""Print the d_k bound constant table and check the sandwich on a 64 x 64 grid.

Usage: python scripts/regen_constants.py [--grid 64]
Paste the printed dict over DK_BOUND_CONSTANTS in src/hiercoop/cutset.py.
"""

import argparse

from hiercoop.cutset import d_regular_grid, dk_closed_bounds, k2_prime, k3_prime


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=64)
    ap.add_argument("--alpha", type=float, nargs="+", default=[2.0, 2.5, 3.0, 4.0])
    args = ap.parse_args()
    print("DK_BOUND_CONSTANTS = {")
    for a in args.alpha:
        print(f"    {a!r}: ({k2_prime(a)!r}, {k3_prime(a)!r}),")
    print("}")
    N = args.grid
    for a in args.alpha:
        g = d_regular_grid(N, a)
        lo = min(float(g[kx - 1].min() / dk_closed_bounds(kx, N * N, a)[0]) for kx in range(1, N + 1))
        hi = min(float(dk_closed_bounds(kx, N * N, a)[1] / g[kx - 1].max()) for kx in range(1, N + 1))
        print(f"# alpha={a}: min d/lower = {lo:.3f}, min upper/d = {hi:.3f}")


if __name__ == "__main__":
    main()
