"""Wardrop equilibria under uncertainty and public signaling in congestion games."""

from .equilibrium import (
    EquilibriumResult,
    NonConvergence,
    beckmann_value,
    parallel_links_wardrop,
    solve_on_support,
    solve_wardrop,
    verify_wardrop,
    water_fill,
)
from .generators import build, parse_spec
from .model import (
    Belief,
    Commodity,
    Edge,
    Instance,
    ModelError,
    StateSpace,
    alpha_belief,
    dump_instance,
    load_instance,
    make_belief,
    parse_tntp,
    validate_instance,
)
from .series_parallel import braess_witness, full_revelation_guarantee, is_series_parallel
from .signaling import (
    SignalingScheme,
    evaluate_scheme,
    full_revelation_scheme,
    grid_oracle_two_state,
    no_signal_scheme,
    optimal_scheme_lp,
    optimal_scheme_two_state,
    prune_scheme,
)
from .supports import (
    cost_profile,
    enumerate_supports_parallel,
    enumerate_supports_two_state,
    is_concave,
    support_region,
)

__version__ = "0.1.0"
