"""Walk through the Braess game: supports, cost profile and the best public signal."""

import numpy as np

from congestion_signaling import generators as gen
from congestion_signaling.series_parallel import full_revelation_guarantee
from congestion_signaling.signaling import (
    evaluate_scheme,
    full_revelation_scheme,
    no_signal_scheme,
    optimal_scheme_two_state,
)
from congestion_signaling.supports import cost_profile, enumerate_supports_two_state, is_concave


def main():
    inst = gen.braess()
    atlas = enumerate_supports_two_state(inst)
    print("support regions (alpha = probability of theta1):")
    for reg in atlas.regions:
        print(f"  [{reg.alpha_lo:.3f}, {reg.alpha_hi:.3f}]  cost {reg.cost_lo:.3f} -> {reg.cost_hi:.3f}  "
              f"{' '.join(reg.support[0])}")
    profile = cost_profile(atlas)
    print("concave profile:", is_concave(profile))

    prior = (0.5, 0.5)
    full = evaluate_scheme(inst, full_revelation_scheme(prior)).total
    silent = evaluate_scheme(inst, no_signal_scheme(prior)).total
    best = optimal_scheme_two_state(inst)
    print(f"full revelation {full:.4f}, no signal {silent:.4f}, optimum {best.cost:.4f}")
    print("optimal scheme columns:\n", np.round(best.scheme.phi, 4))
    print("guarantee:", full_revelation_guarantee(inst))


if __name__ == "__main__":
    main()
