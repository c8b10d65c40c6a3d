import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestion_signaling import generators as gen
from congestion_signaling.equilibrium import solve_wardrop, verify_wardrop
from congestion_signaling.model import Edge, Instance, NotADistribution, StateSpace, alpha_belief
from congestion_signaling.signaling import (
    SignalingScheme,
    evaluate_scheme,
    full_revelation_scheme,
    grid_oracle_two_state,
    no_signal_scheme,
    optimal_scheme_lp,
    optimal_scheme_two_state,
    point_masses_cost,
    prune_scheme,
)
from congestion_signaling.supports import (
    RequiresOffsetsOnly,
    cost_profile,
    enumerate_supports_parallel,
    enumerate_supports_two_state,
    is_concave,
)

from .oracles import parallel_instance
from .strategies import braess_family, parallel_offsets_only, sp_offsets_only

A1 = (("e1", "e2", "e3", "e4"),)
A2 = (("e1", "e2", "e3", "e4", "e5"),)


# -- constructors -----------------------------------------------------------------------


def test_full_revelation_is_diagonal():
    s = full_revelation_scheme((0.3, 0.7))
    assert np.allclose(s.phi, np.diag([0.3, 0.7]))
    assert s.posterior(0).weights == (1.0, 0.0)
    assert s.posterior(1).weights == (0.0, 1.0)


def test_point_mass_prior_issues_one_signal():
    s = full_revelation_scheme((1.0, 0.0))
    assert s.issued() == [0]
    n = no_signal_scheme((1.0, 0.0))
    assert n.posterior(0).weights == s.posterior(0).weights


def test_no_signal_posterior_is_prior():
    s = no_signal_scheme((0.25, 0.75))
    assert s.n_signals == 1
    assert s.masses[0] == pytest.approx(1.0)
    assert s.posterior(0).weights == pytest.approx((0.25, 0.75))


def test_negative_entries_rejected():
    with pytest.raises(NotADistribution):
        SignalingScheme([[0.6, -0.1], [0.5, 0.0]])


def test_row_sums_checked_against_prior():
    with pytest.raises(NotADistribution):
        evaluate_scheme(gen.example2(), SignalingScheme([[0.4], [0.5]]))


# -- evaluation -------------------------------------------------------------------------


def test_example2_costs():
    inst = gen.example2()
    assert evaluate_scheme(inst, full_revelation_scheme((0.5, 0.5))).total == pytest.approx(1.0, abs=1e-9)
    assert evaluate_scheme(inst, no_signal_scheme((0.5, 0.5))).total == pytest.approx(7 / 8, abs=1e-9)


def test_braess_full_revelation():
    inst = gen.braess()
    ev = evaluate_scheme(inst, full_revelation_scheme((0.5, 0.5)))
    assert ev.total == pytest.approx(7 / 4, abs=1e-9)
    assert ev.total == pytest.approx(sum(s.mass * s.cost for s in ev.signals), abs=1e-12)
    assert point_masses_cost(inst) == pytest.approx(7 / 4, abs=1e-9)


def test_zero_mass_signals_are_skipped():
    inst = gen.example1()
    ev = evaluate_scheme(inst, SignalingScheme([[0.5, 0.0, 0.0], [0.0, 0.0, 0.5]]))
    assert [s.index for s in ev.signals] == [0, 2]
    assert ev.total == pytest.approx(2.0, abs=1e-9)


# -- LP ---------------------------------------------------------------------------------


def test_braess_lp_keeps_the_prior():
    lp = optimal_scheme_lp(gen.braess(), [A1, A2])
    assert lp.cost == pytest.approx(1.5, abs=1e-6)
    (block,) = lp.issued_blocks
    assert block.support == A1
    assert block.phi == pytest.approx([0.5, 0.5], abs=1e-9)


def test_example1_lp_reveals_the_state():
    inst = gen.example1()
    atlas = enumerate_supports_two_state(inst)
    lp = optimal_scheme_lp(inst, list(dict.fromkeys(atlas.supports)))
    assert lp.cost == pytest.approx(2.0, abs=1e-6)
    posts = sorted(tuple(np.round(b.phi / b.mass, 9)) for b in lp.issued_blocks)
    assert posts == [(0.0, 1.0), (1.0, 0.0)]


def test_example2_two_commodity_lp_beats_no_signal():
    inst = gen.example2()
    rng = np.random.default_rng(42)
    cands = {solve_wardrop(inst, alpha_belief(a)).support for a in rng.uniform(0, 1, 200)}
    cands |= {solve_wardrop(inst, alpha_belief(a)).support for a in (0.0, 0.5, 1.0)}
    lp = optimal_scheme_lp(inst, sorted(cands))
    assert lp.cost <= 7 / 8 + 1e-8
    for b in lp.issued_blocks:
        assert b.residual <= 1e-5


def test_lp_potentials_match_evaluated_cost():
    inst = gen.braess().with_prior((0.3, 0.7))
    lp = optimal_scheme_lp(inst, [A1, A2])
    assert evaluate_scheme(inst, lp.scheme).total == pytest.approx(lp.cost, rel=1e-6)


def test_lp_requires_offsets_only():
    with pytest.raises(RequiresOffsetsOnly):
        optimal_scheme_lp(gen.example3(), [(("e1", "e2"),)])


def test_three_state_lp_with_parallel_candidates():
    inst = parallel_instance([1.0, 1.0], [0.0, 1.0], [1.0, 0.0], 1.0, (0.4, 0.6))
    # a third state where both links are equally cheap
    edges = tuple(Edge(e.id, e.tail, e.head, (1.0,) * 3, e.offset + (0.5,)) for e in inst.edges)
    inst3 = Instance(inst.vertices, edges, inst.commodities, StateSpace(("a", "b", "c"), (0.2, 0.3, 0.5)))
    cands = sorted(enumerate_supports_parallel(inst3))
    lp = optimal_scheme_lp(inst3, cands)
    assert np.allclose(lp.scheme.phi.sum(axis=1), inst3.prior.weights, atol=1e-9)
    full = evaluate_scheme(inst3, full_revelation_scheme(inst3.prior.weights)).total
    none = evaluate_scheme(inst3, no_signal_scheme(inst3.prior.weights)).total
    assert lp.cost <= min(full, none) + 1e-8
    pruned, _ = prune_scheme(lp.scheme, [b.support for b in lp.blocks], inst3)
    assert len(pruned.issued()) <= 3


# -- pruning ----------------------------------------------------------------------------


def test_identical_supports_merge():
    s, sups = prune_scheme(SignalingScheme([[0.2, 0.3], [0.1, 0.4]]), [A1, A1])
    assert s.n_signals == 1
    assert s.phi[:, 0] == pytest.approx([0.5, 0.5])
    assert sups == [A1]


def test_zero_mass_column_dropped():
    s, sups = prune_scheme(SignalingScheme([[0.5, 0.0], [0.5, 0.0]]), [A1, A2])
    assert s.n_signals == 1
    assert sups == [A1]


def test_nested_braess_split_merges_at_equal_cost():
    inst = gen.braess().with_prior((0.3, 0.7))
    # both posteriors stay in the A1 region; the first signal claims a strictly smaller support
    scheme = SignalingScheme([[0.1, 0.2], [0.3, 0.4]])
    before = evaluate_scheme(inst, scheme).total
    small = (("e1", "e2"),)
    pruned, sups = prune_scheme(scheme, [small, A1], inst)
    assert pruned.n_signals == 1
    assert sups == [A1]
    assert evaluate_scheme(inst, pruned).total == pytest.approx(before, abs=1e-9)


def test_nested_merge_refused_when_cost_changes():
    inst = gen.example1()
    scheme = full_revelation_scheme((0.5, 0.5))
    sups = [(("e2", "e3"),), (("e1", "e2", "e3"),)]
    pruned, _ = prune_scheme(scheme, sups, inst)
    assert evaluate_scheme(inst, pruned).total == pytest.approx(2.0, abs=1e-9)


def test_caratheodory_reduction_to_state_count():
    posts = np.array([0.0, 0.2, 0.6, 1.0])
    w = np.array([0.2, 0.2, 0.3, 0.3])
    prior = (float(w @ posts), float(w @ (1 - posts)))
    inst = gen.example1().with_prior(prior)
    phi = np.vstack([w * posts, w * (1 - posts)])
    sups = [((f"s{k}",),) for k in range(4)]  # pairwise distinct, never nested
    before = evaluate_scheme(inst, SignalingScheme(phi)).total
    pruned, kept = prune_scheme(SignalingScheme(phi), sups, inst)
    assert len(pruned.issued()) <= 2
    assert len(kept) == pruned.n_signals
    assert evaluate_scheme(inst, pruned).total <= before + 1e-9
    assert pruned.prior == pytest.approx(prior, abs=1e-9)


# -- two-state pipeline -----------------------------------------------------------------


def test_example1_pipeline():
    opt = optimal_scheme_two_state(gen.example1())
    assert opt.cost == pytest.approx(2.0, abs=1e-6)
    assert opt.envelope_cost == pytest.approx(2.0, abs=1e-6)
    assert np.allclose(opt.scheme.phi[:, opt.scheme.issued()].sum(axis=0), [0.5, 0.5])


def test_braess_pipeline():
    opt = optimal_scheme_two_state(gen.braess())
    assert opt.cost == pytest.approx(1.5, abs=1e-6)
    assert opt.scheme.n_signals == 1


@pytest.mark.parametrize("prior", [(0.0, 1.0), (1.0, 0.0)])
def test_braess_point_mass_prior(prior):
    inst = gen.braess()
    opt = optimal_scheme_two_state(inst, prior=prior)
    expected = 1.5 if prior[0] == 0.0 else 2.0
    assert opt.cost == pytest.approx(expected, abs=1e-6)
    single = inst.with_prior(prior)
    assert evaluate_scheme(single, full_revelation_scheme(prior)).total == pytest.approx(expected, abs=1e-9)
    assert evaluate_scheme(single, no_signal_scheme(prior)).total == pytest.approx(expected, abs=1e-9)


def test_example3_grid_oracle_beats_both_baselines():
    inst = gen.example3()
    g = grid_oracle_two_state(inst, n=2000)
    assert g.value == pytest.approx(np.sqrt(2) - 0.5, abs=1e-5)
    assert evaluate_scheme(inst, full_revelation_scheme((0.5, 0.5))).total == pytest.approx(1.0)
    assert evaluate_scheme(inst, no_signal_scheme((0.5, 0.5))).total == pytest.approx(1.0)


# -- properties -------------------------------------------------------------------------


@settings(max_examples=25)
@given(parallel_offsets_only(max_links=5))
def test_pipeline_dominates_baselines_and_recovers_equilibria(inst):
    prior = inst.prior.weights
    opt = optimal_scheme_two_state(inst)
    assert np.allclose(opt.scheme.prior, prior, atol=1e-9)
    assert np.all(opt.scheme.phi >= 0)
    full = evaluate_scheme(inst, full_revelation_scheme(prior)).total
    none = evaluate_scheme(inst, no_signal_scheme(prior)).total
    assert opt.cost <= min(full, none) + 1e-8
    assert opt.cost == pytest.approx(opt.envelope_cost, abs=1e-6)
    assert len(opt.scheme.issued()) <= 2
    lp = optimal_scheme_lp(inst, list(dict.fromkeys(opt.atlas.supports)))
    for b in lp.issued_blocks:
        assert verify_wardrop(inst, alpha_belief(b.phi[0] / b.mass), b.flow).residual <= 1e-5


@settings(max_examples=15)
@given(sp_offsets_only(max_edges=6))
def test_concave_profiles_make_full_revelation_optimal(inst):
    opt = optimal_scheme_two_state(inst)
    assert is_concave(cost_profile(opt.atlas))
    assert opt.cost == pytest.approx(point_masses_cost(inst), abs=1e-6)


@settings(max_examples=6)
@given(braess_family(), st.floats(0.05, 0.95))
def test_pipeline_matches_grid_oracle(inst, p):
    inst = inst.with_prior((p, 1 - p))
    opt = optimal_scheme_two_state(inst)
    g = grid_oracle_two_state(inst, n=2000)
    assert opt.cost == pytest.approx(g.value, abs=1e-5)
