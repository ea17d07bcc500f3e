#!/usr/bin/env python3
"""Solve for lambda on a square log grid and print convergence, envelope and compatibility diagnostics."""

import argparse
import time

from savings_hjb.model import ModelParams, compute_bound_constants
from savings_hjb.pde import SolverConfig, build_grid, check_bounds, compatibility_check, fixed_point_solve, \
    reconstruct_value


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=201, help="nodes per axis")
    ap.add_argument("--half-width", type=float, default=4.0)
    ap.add_argument("--scheme", default="explicit_upwind", choices=("explicit_upwind", "adi_semi_implicit"))
    ap.add_argument("--out", default=None, help="write lambda and v CSVs into this directory")
    args = ap.parse_args()

    params = ModelParams()
    grid = build_grid((-args.half_width, args.half_width), args.n, args.n)
    cfg = SolverConfig(scheme=args.scheme)
    start = time.perf_counter()
    lam, rep = fixed_point_solve(grid, params, cfg, measure_boundary=True)
    print(rep.to_text(), end="")
    print(f"solve time {time.perf_counter() - start:.1f}s")
    print(check_bounds(lam, compute_bound_constants(params)).to_text().rstrip())
    v = reconstruct_value(lam, grid, params, cfg)
    print(f"compatibility max rel err {compatibility_check(v, lam):.4f}")
    if args.out:
        import os
        os.makedirs(args.out, exist_ok=True)
        lam.to_csv(os.path.join(args.out, "lambda.csv"), time_stride=10)
        v.to_csv(os.path.join(args.out, "value.csv"), time_stride=10)


if __name__ == "__main__":
    main()
