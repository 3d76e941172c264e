from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import enumerate_yu
from tbscreen.clinic import build_clinic_model, zero_clinic
from tbscreen.dist import truncated_poisson
from tbscreen import mdp as M
from tbscreen.mdp import (build_group_mdp, expected_stage_cost, infection_probability,
                          stage_cost_components, transition_distribution)
from tbscreen.model import ACTIONS, Action, GroupId, GroupState, Test

G11, G22, G32 = GroupId(1, 1), GroupId(2, 2), GroupId(3, 2)
BB = Action(Test.BLOOD, Test.BLOOD)
BN = Action(Test.BLOOD, Test.NONE)


def test_infection_probability_examples(paper):
    gp = paper.groups[G11]
    assert infection_probability(GroupState(3, 20, 0), gp, 0.1) == pytest.approx(0.005, abs=1e-15)
    assert infection_probability(GroupState(0, 0, 0), gp, 0.1) == 0.1 * 1 * 0.05
    gp = replace(paper.groups[G22], transmission_prob=0.22, patient_contact_prob=1.0)
    assert infection_probability(GroupState(10, 90, 2), gp, 0.1) == pytest.approx(0.0264, abs=1e-15)
    sure = replace(gp, transmission_prob=1.0)
    assert infection_probability(GroupState(1, 0, 1), sure, 1.0) == 1.0   # clamped


def test_tested_counts_examples():
    assert M.tested_counts(GroupState(3, 10, 0), BN, 2) == (0, 0, 3, 8)
    for a in ACTIONS:
        assert M.tested_counts(GroupState(0, 0, 0), a, 0) == (0, 0, 0, 0)
    assert M.tested_counts(GroupState(2, 5, 0), Action(Test.SKIN, Test.SKIN), 0) == (2, 5, 0, 0)
    with pytest.raises(ValueError):
        M.tested_counts(GroupState(2, 5, 0), BN, 6)


def small_params(paper, group, mx=6, my=8, mu=4):
    return replace(paper.groups[group], max_new=mx, max_ongoing=my, max_undetected=mu)


@pytest.mark.parametrize("group", [G11, G22, G32])
@pytest.mark.parametrize("state", [(0, 0, 0), (2, 3, 1), (1, 5, 0), (3, 3, 3), (6, 0, 2)])
def test_transition_matches_enumeration(paper, group, state):
    gp = small_params(paper, group, my=5, mu=3)
    gp = replace(gp, transmission_prob=0.4)   # make infections likely enough to matter
    for a in ACTIONS:
        ref = enumerate_yu(GroupState(*state), a, gp, 0.3)
        got = transition_distribution(GroupState(*state), a, gp, 0.3)
        assert np.abs(got.yu - ref).max() <= 1e-12
        assert got.new_arrivals.allclose(truncated_poisson(gp.arrival_rate, gp.max_new))
        assert np.abs(got.undetected_marginal().mass - ref.sum(axis=0)).max() <= 1e-9


def test_empty_state_transition(paper):
    gp = small_params(paper, G22)
    for a in ACTIONS:
        t = transition_distribution(GroupState(0, 0, 0), a, gp, 0.1)
        assert t.yu[0, 0] == 1.0 and t.total() == pytest.approx(1.0, abs=1e-12)


def test_kernel_agrees_with_reference(small, clinic):
    rng = np.random.default_rng(0)
    for g in (G11, G22, G32, GroupId(2, 3)):
        mdp = build_group_mdp(small, g, clinic)
        for idx in rng.choice(mdp.n_states, 40, replace=False):
            s = mdp.state(idx)
            for ai, a in enumerate(ACTIONS):
                ref = transition_distribution(s, a, mdp.params, small.beta).yu
                assert np.abs(mdp.yu_table(idx, ai) - ref).max() <= 1e-12


def test_rows_sum_to_one_on_desk_instances(desk, clinic):
    """Every (state, action) row of every desk group, checked in one sweep."""
    for g in desk.group_ids:
        mdp = build_group_mdp(desk, g, clinic)
        sums = mdp.q_values(np.ones(mdp.n_states), 1.0) - mdp.cost
        assert sums.shape == (mdp.n_states, 6)
        assert np.abs(sums - 1.0).max() <= 1e-9, g


def test_successors_within_bounds(small, clinic):
    mdp = build_group_mdp(small, G22, clinic)
    _, my, mu = mdp.shape
    for idx in range(0, mdp.n_states, 7):
        for ai in range(6):
            t = mdp.yu_table(idx, ai)
            assert t.shape == (my, mu) and (t >= 0).all()


def test_state_count_and_indexing(small, clinic):
    mdp = build_group_mdp(small, G32, clinic)
    mx, my, mu = mdp.shape
    assert mdp.n_states == mx * my * mu == len(mdp.states)
    for idx in (0, 17, mdp.n_states - 1):
        assert mdp.index(mdp.state(idx)) == idx


def test_empty_state_costs_nothing(paper, clinic):
    for g in paper.group_ids:
        for a in ACTIONS:
            assert expected_stage_cost(GroupState(0, 0, 0), a, paper.groups[g], paper, clinic, g) == 0


def test_degenerate_cost_closed_form(paper):
    gp = replace(paper.groups[G22], skin_fp=0, skin_fn=0, blood_fp=0, blood_fn=0,
                 transmission_prob=0.0)
    zc = zero_clinic(paper)
    for x, y in [(3, 10), (0, 7), (5, 0)]:
        c = expected_stage_cost(GroupState(x, y, 0), BB, gp, paper, zc, G22)
        assert c == pytest.approx(45 * (x + y * (1 - gp.leave_prob)), rel=1e-14)


def test_double_charge_option(paper, clinic):
    s = GroupState(4, 10, 0)
    a = Action(Test.SKIN, Test.NONE)
    gp = paper.groups[G22]
    one = stage_cost_components(*s, a, gp, paper, clinic, G22)["skin_tests"]
    two = stage_cost_components(*s, a, gp, replace(paper, double_charge_new_skin=True),
                                clinic, G22)["skin_tests"]
    assert one == 4 and two == 8


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 7), st.integers(0, 14), st.integers(0, 3), st.sampled_from(ACTIONS),
       st.sampled_from([G11, G22, G32, GroupId(1, 3)]))
def test_cost_nondecreasing_in_u(small, clinic, x, y, u, a, g):
    gp = small.groups[g]
    lo = expected_stage_cost(GroupState(x, y, u), a, gp, small, clinic, g)
    hi = expected_stage_cost(GroupState(x, y, u + 1), a, gp, small, clinic, g)
    assert hi >= lo - 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 4), st.sampled_from([Test.SKIN, Test.BLOOD]))
def test_no_ongoing_test_maximizes_undetected(paper, x, y, u, new):
    gp = replace(paper.groups[G22], max_new=6, max_ongoing=6, max_undetected=4)
    u = min(u, x + y)
    s = GroupState(x, y, u)
    zc = zero_clinic(paper)
    means = {}
    for t in Test:
        a = Action(new, t)
        means[t] = transition_distribution(s, a, gp, paper.beta).undetected_marginal().mean()
        if t is Test.NONE:
            comps = stage_cost_components(x, y, u, a, gp, paper, zc, G22)
            ongoing_x = x * (1 if new is Test.BLOOD else 0)
            assert comps["blood_tests"] == ongoing_x
            assert comps["skin_tests"] == (x if new is Test.SKIN else 0)
    assert means[Test.NONE] >= max(means[Test.SKIN], means[Test.BLOOD]) - 1e-12


def test_expected_cost_matches_library_table(small, clinic):
    mdp = build_group_mdp(small, G32, clinic)
    for idx in (0, 5, 123, mdp.n_states - 1):
        s = mdp.state(idx)
        for ai, a in enumerate(ACTIONS):
            assert mdp.cost[idx, ai] == pytest.approx(
                expected_stage_cost(s, a, small.groups[G32], small, clinic, G32), rel=1e-12)


def test_transitions_csv(small, clinic):
    mdp = build_group_mdp(small, G11, clinic)
    text = mdp.transitions_csv(states=[GroupState(1, 2, 0)])
    lines = text.splitlines()
    assert lines[0] == "x,y,u,action,x_next,y_next,u_next,probability"
    total = sum(float(l.rsplit(",", 1)[1]) for l in lines[1:])
    assert total == pytest.approx(6.0, abs=1e-9)
    assert text == mdp.transitions_csv(states=[GroupState(1, 2, 0)])
