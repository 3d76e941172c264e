from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from tbscreen.clinic import build_clinic_model
from tbscreen.mdp import transition_distribution
from tbscreen.model import (ACTIONS, Action, GroupId, GroupState, InitialMode, Test)
from tbscreen.sim import (CalibrationError, PolicySpec, StepOutcome, ThresholdRule,
                          calibrate_beta, check_accounting, compare, run_years, sample_step,
                          simulate, table1_rules, transfer_state)

G11, G22, G32 = GroupId(1, 1), GroupId(2, 2), GroupId(3, 2)
BB = Action(Test.BLOOD, Test.BLOOD)


def test_empty_system_costs_nothing(paper, clinic):
    groups = {g: replace(gp, max_new=0) for g, gp in paper.groups.items()}
    sp = replace(paper, groups=groups, initial_state_mode=InitialMode.CONFIGURED,
                 initial={g: GroupState(0, 0, 0) for g in groups}).validate()
    for policy in (PolicySpec.annual_skin(), PolicySpec.threshold()):
        rep = simulate(policy, sp, 20, 3, seed=1, clinic=clinic)
        assert rep.avg_yearly_cost == 0 and rep.avg_infection_rate == 0


def test_same_seed_same_report(desk, clinic):
    a = simulate(PolicySpec.threshold(), desk, 30, 5, seed=9, clinic=clinic)
    b = simulate(PolicySpec.threshold(), desk, 30, 5, seed=9, clinic=clinic)
    assert a.to_csv() == b.to_csv() and a.to_text() == b.to_text()
    assert np.array_equal(a.rep_costs, b.rep_costs)
    c = simulate(PolicySpec.threshold(), desk, 30, 5, seed=10, clinic=clinic)
    assert not np.array_equal(a.rep_costs, c.rep_costs)


def test_policy_against_itself_gives_identical_rows(desk, clinic):
    cmp = compare([PolicySpec.annual_skin(), PolicySpec.annual_skin()], desk, 25, 4, seed=2,
                  clinic=clinic)
    rows = cmp.to_csv().splitlines()
    assert rows[1] == rows[2]
    assert cmp.paired_cost_difference(0, 1) == (0.0, 0.0)
    with pytest.raises(ValueError):
        compare([PolicySpec.annual_skin()], desk, 5, 2, seed=0)


def test_comparison_has_half_widths(desk, clinic):
    cmp = compare([PolicySpec.annual_skin(), PolicySpec.threshold()], desk, 25, 5, seed=3,
                  clinic=clinic)
    for r in cmp.reports:
        assert np.isfinite([r.cost_hw, r.rate_hw, r.alpha_hw]).all()
        assert r.avg_yearly_cost >= 0 and 0 <= r.avg_infection_rate <= 1
    assert "nan" not in cmp.to_csv()


def test_half_width_shrinks_with_replications(desk, clinic):
    few = simulate(PolicySpec.annual_skin(), desk, 40, 8, seed=4, clinic=clinic)
    many = simulate(PolicySpec.annual_skin(), desk, 40, 64, seed=4, clinic=clinic)
    assert many.cost_hw < few.cost_hw and many.rate_hw < few.rate_hw


def test_accounting_checked_every_year(desk, clinic):
    n = 0
    for t, g, (x, y, u), a, o in run_years(PolicySpec.threshold(), desk, 15, 6, seed=5,
                                           clinic=clinic):
        assert (o.undetected_ongoing + o.undetected_new >= o.next_undetected).all()
        assert (o.stay - o.infected_ongoing + x - o.infected_new >= o.next_ongoing).all()
        assert ((a // 2 == 0) <= (o.caught_ongoing == 0)).all()
        n += 1
    assert n == 15 * len(desk.groups)


def test_accounting_violation_raises(desk, clinic):
    o = sample_step(G22, GroupState(3, 10, 1), BB, desk, clinic, 50, seed=1)
    bad = StepOutcome(**{**o.__dict__, "caught_new": o.caught_new + 1})
    with pytest.raises(RuntimeError, match="accounting"):
        check_accounting(np.full(50, 3), np.full(50, 10), bad)


def test_sampler_matches_exact_transition(paper, clinic):
    gp = paper.groups[G11]
    s = GroupState(2, 5, 1)
    n = 1_000_000
    o = sample_step(G11, s, BB, paper, clinic, n, seed=124)
    exact = transition_distribution(s, BB, gp, paper.beta)
    px, yu = exact.new_arrivals.mass, exact.yu
    key = (o.next_new * yu.shape[0] + o.next_ongoing) * yu.shape[1] + o.next_undetected
    freq = np.bincount(key, minlength=px.size * yu.size) / n
    p = (px[:, None, None] * yu[None]).ravel()
    cells = p >= 1e-3
    assert cells.sum() > 10
    se = np.sqrt(p[cells] * (1 - p[cells]) / n)
    assert (np.abs(freq[cells] - p[cells]) <= 3 * se).all()
    assert freq[p == 0].sum() == 0
    # the per-cell bound alone has a sizable family-wise false-alarm rate;
    # the pooled goodness-of-fit statistic is the sharper check
    chi2 = float((((freq - p) ** 2 / np.where(p > 0, p, 1))[p >= 1e-6]).sum() * n)
    dof = int((p >= 1e-6).sum()) - 1
    assert stats.chi2.sf(chi2, dof) > 1e-3


def test_perfect_tests_lower_the_cost(paper, clinic):
    perfect = replace(paper, groups={g: replace(gp, skin_fp=0, skin_fn=0, blood_fp=0, blood_fn=0)
                                     for g, gp in paper.groups.items()})
    base = simulate(PolicySpec.annual_skin(), paper, 40, 10, seed=6, clinic=clinic)
    better = simulate(PolicySpec.annual_skin(), perfect, 40, 10, seed=6, clinic=clinic)
    assert better.avg_yearly_cost <= base.avg_yearly_cost


def test_annual_skin_infection_rate(paper, clinic):
    rep = simulate(PolicySpec.annual_skin(), paper, 100, 30, seed=7, clinic=clinic)
    assert 0.010 <= rep.avg_infection_rate <= 0.025


def test_calibrate_to_zero(paper, clinic):
    assert calibrate_beta(0.0, paper, clinic=clinic) == 0.0


def test_calibrate_unreachable_target(desk, clinic):
    with pytest.raises(CalibrationError, match="outside the reachable range"):
        calibrate_beta(0.9, desk, clinic=clinic)


def test_calibrate_argument_checks(desk):
    with pytest.raises(ValueError):
        calibrate_beta(0.02, desk, years=50)
    with pytest.raises(ValueError):
        calibrate_beta(0.02, desk, metric="bogus")
    with pytest.raises(ValueError):
        calibrate_beta(1.5, desk)


def test_calibration_postcondition(desk, clinic):
    hist = []
    beta = calibrate_beta(0.02, desk, tol=2e-3, seed=3, clinic=clinic, history=hist)
    r = simulate(PolicySpec.annual_skin(), replace(desk, beta=beta), 200, 20, 3, clinic)
    assert abs(r.avg_alpha - 0.02) <= 2e-3
    assert hist[-1] == (beta, pytest.approx(r.avg_alpha))


def test_threshold_rule_semantics():
    r = ThresholdRule(G32, ((0.017, Test.SKIN), (0.022, Test.BLOOD)))
    x, y = np.array([0, 0, 0, 0]), np.array([100, 100, 100, 0])
    u = np.array([1, 2, 3, 0])
    assert [ACTIONS[a] for a in r.choose(0, x, y, u)] == [
        Action(Test.BLOOD, Test.NONE), Action(Test.BLOOD, Test.SKIN),
        Action(Test.BLOOD, Test.BLOOD), Action(Test.BLOOD, Test.NONE)]
    every3 = ThresholdRule(G22, ((0.0, Test.BLOOD),), period_years=3)
    codes = [int(every3.choose(t, 1, 5, 0)) // 2 for t in range(7)]
    assert codes == [2, 0, 0, 2, 0, 0, 2]


@pytest.mark.parametrize("kwargs", [
    {"bands": ((0.02, Test.BLOOD), (0.01, Test.SKIN))},
    {"bands": ((1.5, Test.BLOOD),)},
    {"bands": (), "period_years": 0},
    {"bands": (), "new_test": Test.NONE},
])
def test_threshold_rule_validation(kwargs):
    with pytest.raises(ValueError):
        ThresholdRule(G11, **kwargs)


def test_table1_rules_cover_all_groups(paper):
    rules = table1_rules()
    assert {r.group for r in rules} == set(paper.group_ids)
    with pytest.raises(ValueError):
        PolicySpec.threshold(rules + rules[:1])


def test_transfer_state_preserves_share():
    x, y, u = transfer_state([10], [100], [5], 0.2, (10, 40, 8))
    assert (x[0], y[0], u[0]) == (2, 20, 1)
    x, y, u = transfer_state([3], [50], [60], 1.0, (4, 20, 5))
    assert (x[0], y[0], u[0]) == (3, 19, 4)
