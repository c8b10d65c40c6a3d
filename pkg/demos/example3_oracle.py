"""State-dependent slopes: the grid oracle against the closed-form cost curve.

Link one costs ``1`` in the first state and ``x`` in the second; link two
costs ``x`` and then ``2``.  The equilibrium cost under belief ``alpha`` is
``2 a^2 - 3 a + 2`` for ``a >= 1/2``, and the best split of the uniform
prior mixes the point mass at ``a = 0`` with the tangent point
``a = 1/sqrt(2)``.
"""

import numpy as np

from congestion_signaling import generators as gen
from congestion_signaling.equilibrium import solve_wardrop
from congestion_signaling.model import alpha_belief
from congestion_signaling.signaling import grid_oracle_two_state


def main():
    inst = gen.example3()
    for a in (0.5, 0.6, 0.75, 0.9, 1.0):
        print(f"alpha={a:.2f}  solver {solve_wardrop(inst, alpha_belief(a)).cost:.6f}  "
              f"closed form {2 * a * a - 3 * a + 2:.6f}")
    oracle = grid_oracle_two_state(inst)
    print(f"grid optimum {oracle.value:.8f} (sqrt(2) - 1/2 = {np.sqrt(2) - 0.5:.8f})")
    print("posteriors", np.round(oracle.posteriors, 6), "weights", np.round(oracle.weights, 6))
    a = 0.75
    print(f"split into alpha in {{0, 3/4}} costs {(2 / 3) * (2 * a * a - 3 * a + 2) + 1 / 3:.6f}")


if __name__ == "__main__":
    main()
