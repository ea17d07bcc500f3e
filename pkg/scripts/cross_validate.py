#!/usr/bin/env python3
"""Compare the PDE solution with Feynman-Kac Monte Carlo at a handful of points.

Solves on n x n and on the grid with twice the spacing; the difference sets the
discretisation allowance added to three standard errors.
"""

import argparse
import time

from savings_hjb.experiments import DEFAULT_POINTS, cross_validate
from savings_hjb.model import ModelParams
from savings_hjb.pde import SolverConfig, build_grid
from savings_hjb.sde import SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=201)
    ap.add_argument("--n-paths", type=int, default=100_000)
    ap.add_argument("--dt", type=float, default=0.002)
    args = ap.parse_args()
    start = time.perf_counter()
    rep = cross_validate(ModelParams(), build_grid((-4.0, 4.0), args.n, args.n), SolverConfig(), DEFAULT_POINTS,
                         SimConfig(dt=args.dt, n_paths=args.n_paths))
    print(rep.to_text(), end="")
    print(f"{'all points within budget' if rep.passed else 'FAILED'} ({time.perf_counter() - start:.0f}s)")
    raise SystemExit(0 if rep.passed else 2)


if __name__ == "__main__":
    main()
