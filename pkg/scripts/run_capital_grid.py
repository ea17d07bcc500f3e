#!/usr/bin/env python3
"""Capital transients on the (N0, A) x eps grid under proportional consumption."""

import argparse

from savings_hjb.experiments import capital_grid_spec, run_capital_study
from savings_hjb.sde import SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/capital_grid")
    ap.add_argument("--n-paths", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    kw = {} if args.seed is None else {"seed": args.seed}
    spec = capital_grid_spec(out_dir=args.out,
                             sim_config=SimConfig(dt=0.002, n_steps=2500, n_paths=args.n_paths, **kw))
    res = run_capital_study(spec)
    print("N0,A,eps,class,extremum_t,extremum_K")
    for row in res.rows:
        _, N0, A, eps, _, kind, t_ext, k_ext = row
        print(f"{float(N0):g},{float(A):g},{float(eps):g},{kind},{t_ext},{k_ext}")
    print(f"{len(res.artifacts)} files written to {args.out}")


if __name__ == "__main__":
    main()
