"""Histogram of support counts on randomized Sioux Falls instances."""

import argparse
from collections import Counter

from congestion_signaling.cli import SIOUX_TAUS, sioux_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("net", help="SiouxFalls_net.tntp")
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    opts = {"support_eps": 1e-7, "eps_slope": 1e-9, "gap_tol": 1e-9}
    for tau in SIOUX_TAUS:
        counts = Counter(sioux_run(args.net, tau, args.seed + k, 1e5, "1", "19", opts)["supports"]
                         for k in range(args.runs))
        bars = "  ".join(f"{n}:{'#' * c}" for n, c in sorted(counts.items()))
        print(f"tau={tau:<4}  {bars}")


if __name__ == "__main__":
    main()
