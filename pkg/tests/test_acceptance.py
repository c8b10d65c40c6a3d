"""End-to-end acceptance checks; a summary line per criterion is printed after the run."""

import time

import numpy as np
import pytest

from congestion_signaling import generators as gen
from congestion_signaling.cli import SIOUX_TAUS, sioux_run
from congestion_signaling.equilibrium import parallel_links_wardrop, solve_wardrop
from congestion_signaling.model import Commodity, Edge, Instance, StateSpace, alpha_belief
from congestion_signaling.series_parallel import braess_witness, network_of, random_sp_network
from congestion_signaling.signaling import (
    evaluate_scheme,
    full_revelation_scheme,
    grid_oracle_two_state,
    no_signal_scheme,
    optimal_scheme_lp,
    optimal_scheme_two_state,
)
from congestion_signaling.supports import cost_profile, enumerate_supports_two_state, is_concave

from .oracles import parallel_instance

HALF = (0.5, 0.5)


@pytest.mark.criterion(1, "Example 1 profile: breakpoints, endpoints, plateau, concavity, < 1 s")
def test_example1_profile():
    inst = gen.example1()
    start = time.perf_counter()
    atlas = enumerate_supports_two_state(inst)
    profile = cost_profile(atlas)
    concave = is_concave(profile)
    elapsed = time.perf_counter() - start
    mu2 = sorted(1.0 - a for a in atlas.interior_breakpoints)
    assert mu2 == pytest.approx([1 / 4, 2 / 5, 3 / 4, 4 / 5], abs=1e-6)
    assert profile.at_mu2(0.0) == pytest.approx(2.0, abs=1e-6)
    assert profile.at_mu2(1.0) == pytest.approx(2.0, abs=1e-6)
    plateau = profile.at_mu2(np.linspace(0.25, 0.8, 56))
    assert plateau == pytest.approx(np.full(56, 3.0), abs=1e-6)
    assert concave
    assert elapsed < 1.0


@pytest.mark.criterion(2, "Example 2: full revelation 1, no signal 7/8")
def test_example2_baselines():
    inst = gen.example2()
    full = evaluate_scheme(inst, full_revelation_scheme(HALF)).total
    none = evaluate_scheme(inst, no_signal_scheme(HALF)).total
    assert full == pytest.approx(1.0, abs=1e-9)
    assert none == pytest.approx(7 / 8, abs=1e-9)
    assert none < full


@pytest.mark.criterion(3, "Braess: region costs, breakpoint 1/2, full 7/4, LP optimum 3/2")
def test_braess():
    inst = gen.braess()
    atlas = enumerate_supports_two_state(inst)
    assert [1.0 - a for a in atlas.interior_breakpoints] == pytest.approx([0.5], abs=1e-6)
    by_support = {len(r.support[0]): r for r in atlas.regions}
    a1, a2 = by_support[4], by_support[5]
    for mu2 in np.linspace(0.5, 1.0, 11):
        assert a1.cost(1.0 - mu2) == pytest.approx(1.5, abs=1e-6)
    for mu2 in np.linspace(0.0, 0.5, 11):
        assert a2.cost(1.0 - mu2) == pytest.approx(2.0 - mu2, abs=1e-6)
        assert solve_wardrop(inst, alpha_belief(1.0 - mu2)).cost == pytest.approx(2.0 - mu2, abs=1e-6)
    assert evaluate_scheme(inst, full_revelation_scheme(HALF)).total == pytest.approx(7 / 4, abs=1e-6)
    lp = optimal_scheme_lp(inst, list(atlas.distinct_supports))
    assert lp.cost == pytest.approx(3 / 2, abs=1e-6)


@pytest.mark.criterion(4, "Nested Braess: closed form at 20 demands, cost increasing for j = 1, 2, 3")
def test_nested_braess():
    for d in np.linspace(0.05, 4.0, 20):
        got = solve_wardrop(gen.nested_braess(1, demand=float(d)), HALF).cost / d
        assert got == pytest.approx(gen.nested_braess_cost(float(d)), rel=1e-6)
    for j in (1, 2, 3):
        grid = np.linspace(0.1, 3.0 * 10.0 ** (j - 1), 30)
        costs = [solve_wardrop(gen.nested_braess(j, demand=float(d)), HALF).cost / d for d in grid]
        assert np.min(np.diff(costs)) > 1e-9, j


@pytest.mark.criterion(5, "Exponential supports: at least 2^(j+1) supports for j = 1, 2, 3, j = 3 under 60 s")
def test_exponential_supports():
    for j in (1, 2, 3):
        start = time.perf_counter()
        # regions at j = 3 get as narrow as 6e-12 in alpha, below the default merge width
        atlas = enumerate_supports_two_state(gen.exp_supports(j), boundary_tol=1e-13)
        elapsed = time.perf_counter() - start
        assert len(atlas.distinct_supports) >= 2 ** (j + 1), j
        if j == 3:
            assert elapsed < 60.0


def _random_sp_instance(rng, p=0.5):
    net = random_sp_network(rng, int(rng.integers(2, 8)))
    verts, edges = [], []
    for eid, u, v in net:
        verts += [x for x in (u, v) if x not in verts]
        a = 0.0 if rng.random() < 0.15 else float(rng.uniform(0.2, 3.0))
        edges.append(Edge(eid, u, v, (a, a), tuple(float(b) for b in rng.uniform(0.0, 5.0, 2))))
    return Instance(tuple(verts), tuple(edges), (Commodity("s", "t", float(rng.uniform(0.5, 3.0))),),
                    StateSpace(("theta1", "theta2"), (p, 1 - p)))


@pytest.mark.criterion(6, "Series-parallel gate: LP optimum = full revelation on 25 SP instances; Braess witness gap")
def test_series_parallel_gate():
    rng = np.random.default_rng(42)
    for _ in range(25):
        inst = _random_sp_instance(rng, float(rng.uniform(0.05, 0.95)))
        opt = optimal_scheme_two_state(inst)
        full = evaluate_scheme(inst, full_revelation_scheme(inst.prior.weights)).total
        assert opt.cost == pytest.approx(full, abs=1e-6)
    witness = braess_witness(network_of(gen.braess()), "s", "t")
    gap = evaluate_scheme(witness, full_revelation_scheme(HALF)).total - optimal_scheme_two_state(witness).cost
    assert gap >= 0.25 - 1e-6


@pytest.mark.criterion(7, "Sioux Falls: 4 tau values x 10 runs terminate, residual <= 1e-5, counts <= 60")
def test_sioux_falls(sioux_path):
    opts = {"support_eps": 1e-7, "eps_slope": 1e-9, "gap_tol": 1e-9}
    for tau in SIOUX_TAUS:
        for seed in range(42, 52):
            row = sioux_run(sioux_path, tau, seed, 1e5, "1", "19", opts)
            assert row["max_residual"] <= 1e-5, row
            assert 1 <= row["supports"] <= 60, row


def _random_parallel(rng):
    m = int(rng.integers(1, 11))
    # positive slopes make the equilibrium loads unique, so loads can be compared link by link
    return parallel_instance(rng.uniform(0.1, 3.0, m).round(3), rng.uniform(0, 5, m).round(3),
                             rng.uniform(0, 5, m).round(3), float(rng.uniform(0.2, 4.0)), HALF)


def _random_braess(rng):
    spec = [("e1", "s", "v1"), ("e2", "v1", "t"), ("e3", "s", "v2"), ("e4", "v2", "t"), ("e5", "v1", "v2")]
    edges = []
    for k, u, v in spec:
        a = float(rng.uniform(0.2, 2.0))
        edges.append(Edge(k, u, v, (a, a), tuple(float(b) for b in rng.uniform(0, 3, 2))))
    return Instance(("s", "v1", "v2", "t"), tuple(edges), (Commodity("s", "t", float(rng.uniform(0.5, 3.0))),),
                    StateSpace(("theta1", "theta2"), HALF))


@pytest.mark.criterion(8, "Oracle equivalence: water-filling vs Frank-Wolfe loads; pipeline vs grid envelope")
def test_oracle_equivalence():
    rng = np.random.default_rng(42)
    for _ in range(100):
        inst = _random_parallel(rng)
        belief = alpha_belief(float(rng.uniform()))
        wf = parallel_links_wardrop(inst, belief).loads
        fw = solve_wardrop(inst, belief).loads
        assert np.max(np.abs(wf - fw)) <= 1e-7
    for k in range(20):
        inst = _random_parallel(rng) if k < 15 else _random_braess(rng)
        p = float(rng.uniform(0.05, 0.95))
        inst = inst.with_prior((p, 1 - p))
        opt = optimal_scheme_two_state(inst)
        oracle = grid_oracle_two_state(inst, n=10_000)
        assert opt.cost == pytest.approx(oracle.value, abs=1e-5)


@pytest.mark.criterion(9, "Example 3: grid optimum below 1 - 1e-3 while full revelation = no signal = 1")
def test_example3_full_revelation_not_optimal():
    inst = gen.example3()
    full = evaluate_scheme(inst, full_revelation_scheme(HALF)).total
    none = evaluate_scheme(inst, no_signal_scheme(HALF)).total
    oracle = grid_oracle_two_state(inst, n=10_000)
    assert full == pytest.approx(1.0, abs=1e-9)
    assert none == pytest.approx(1.0, abs=1e-9)
    assert oracle.value < 1.0 - 1e-3
