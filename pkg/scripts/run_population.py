#!/usr/bin/env python3
"""Population paths towards the carrying capacity, with the deterministic closed form for reference."""

import argparse

from savings_hjb.experiments import transient_params, logistic_solution, population_spec, run_population_study
from savings_hjb.sde import SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/population")
    ap.add_argument("--sigma", type=float, nargs="+", default=[0.0, 0.05, 0.1])
    ap.add_argument("--n-paths", type=int, default=200)
    args = ap.parse_args()
    params = transient_params()
    spec = population_spec(out_dir=args.out, sigma_values=tuple(args.sigma), params=params,
                           sim_config=SimConfig(dt=0.002, n_steps=2500, n_paths=args.n_paths), write_paths=False)
    res = run_population_study(spec)
    print("N0,sigma,mean N(5),closed form (sigma=0)")
    for _, N0, sig, term, _ in res.rows:
        ref = float(logistic_solution(params.T, float(N0), params))
        print(f"{float(N0):g},{float(sig):g},{float(term):.5f},{ref:.5f}")


if __name__ == "__main__":
    main()
