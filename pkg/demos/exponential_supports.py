"""Count the equilibrium supports met as the belief sweeps [0, 1] on nested Braess graphs."""

import argparse
import time

from congestion_signaling import generators as gen
from congestion_signaling.supports import enumerate_supports_two_state


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-j", type=int, default=3)
    args = ap.parse_args()
    print(f"{'j':>2} {'edges':>5} {'supports':>8} {'lower bound':>11} {'lp solves':>9} {'seconds':>8}")
    for j in range(1, args.max_j + 1):
        inst = gen.exp_supports(j)
        start = time.perf_counter()
        atlas = enumerate_supports_two_state(inst, boundary_tol=1e-13)
        secs = time.perf_counter() - start
        print(f"{j:>2} {len(inst.edges):>5} {len(atlas.distinct_supports):>8} {2 ** (j + 1):>11} "
              f"{atlas.lp_solves:>9} {secs:>8.2f}")


if __name__ == "__main__":
    main()
