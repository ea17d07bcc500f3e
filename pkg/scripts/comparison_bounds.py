#!/usr/bin/env python3
"""Monte Carlo check of the comparison bounds for the auxiliary processes in two (beta, gamma) regimes."""

import argparse

from savings_hjb.feynman_kac import verify_process_inequalities
from savings_hjb.model import ModelParams
from savings_hjb.sde import SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-paths", type=int, default=20_000)
    args = ap.parse_args()
    ok = True
    for beta, gamma in ((0.5, 0.5), (0.3, 0.6)):
        params = ModelParams(beta=beta, gamma=gamma)
        for K, N in ((1.0, 1.0), (2.0, 1.0), (1.0, 2.0)):
            rep = verify_process_inequalities(params, 0.0, K, N, SimConfig(dt=0.002, n_paths=args.n_paths))
            print(f"# beta={beta} gamma={gamma} K={K} N={N}")
            print(rep.to_text(), end="")
            ok &= rep.passed
    raise SystemExit(0 if ok else 2)


if __name__ == "__main__":
    main()
