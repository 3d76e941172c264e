import math

import numpy as np
import pytest

from tbscreen.analyze import (FrequencyEstimate, decision_agreement, default_fixed_x,
                              estimate_frequencies, export_region_map, extract_thresholds,
                              frequencies_csv, frequencies_text)
from tbscreen.model import ACTIONS, Action, GroupId, Test
from tbscreen.sim import PolicySpec
from tbscreen.solve import Policy

G11, G22, G32 = GroupId(1, 1), GroupId(2, 2), GroupId(3, 2)


def constant(g, shape, new, ongoing):
    return Policy.constant(g, shape, Action(new, ongoing))


def test_constant_policy_map(small):
    shape = small.groups[G22].shape
    rm = export_region_map(constant(G22, shape, Test.BLOOD, Test.NONE), G22, 2)
    assert rm.grid.shape == shape[1:]
    assert (rm.grid == 1).all() and rm.codes() == {1}


def test_map_csv(small):
    shape = small.groups[G11].shape
    pol = Policy(G11, shape, np.arange(np.prod(shape)) % 6)
    a = export_region_map(pol, G11, 3).to_csv()
    b = export_region_map(pol, G11, 3).to_csv()
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "y,u,action"
    assert len(lines) == 1 + shape[1] * shape[2]
    assert {l.rsplit(",", 1)[1] for l in lines[1:]} <= {"1", "2", "3"}


def test_map_argument_checks(small):
    shape = small.groups[G11].shape
    pol = constant(G11, shape, Test.BLOOD, Test.NONE)
    with pytest.raises(ValueError):
        export_region_map(pol, G11, shape[0])
    with pytest.raises(ValueError):
        export_region_map(pol, G22, 0)


def test_default_fixed_x(desk, paper):
    assert default_fixed_x(paper, G22) == 50
    assert default_fixed_x(desk, G22) == 10


def test_threshold_when_testing_everywhere():
    shape = (3, 30, 5)
    r = extract_thresholds(constant(G22, shape, Test.BLOOD, Test.BLOOD), G22, 1)
    assert r.bands == ((0.0, Test.BLOOD),)


def test_threshold_when_never_testing():
    r = extract_thresholds(constant(G22, (3, 30, 5), Test.BLOOD, Test.NONE), G22, 1)
    assert r.bands == () and "never tested" in r.diagnostic


def test_synthetic_two_percent_boundary():
    my, mu = 400, 10
    grid = np.zeros((1, my + 1, mu + 1), dtype=np.int64)
    BB = ACTIONS.index(Action(Test.BLOOD, Test.BLOOD))
    for y in range(1, my + 1):
        grid[0, y, math.ceil(0.02 * y):] = BB
    r = extract_thresholds(Policy(G22, grid.shape, grid.ravel()), G22, 0)
    (thr, test), = r.bands
    assert test is Test.BLOOD
    assert thr == pytest.approx(0.02, abs=0.005)


def test_skin_then_blood_bands():
    grid = np.zeros((1, 101, 6), dtype=np.int64)
    S, B = (ACTIONS.index(Action(Test.BLOOD, t)) for t in (Test.SKIN, Test.BLOOD))
    grid[0, 100, 2] = S
    grid[0, 100, 3:] = B
    (t1, k1), (t2, k2) = extract_thresholds(Policy(G32, grid.shape, grid.ravel()), G32, 0).bands
    assert (k1, k2) == (Test.SKIN, Test.BLOOD) and t1 == 0.02 and t2 == 0.03


def test_always_testing_has_period_one(desk, clinic):
    pols = {g: constant(g, gp.shape, Test.BLOOD, Test.BLOOD) for g, gp in desk.groups.items()}
    est = estimate_frequencies(PolicySpec.optimal(pols), desk, horizon=20, replications=3,
                               clinic=clinic)
    for e in est.values():
        assert e.period_years == 1 and e.test is Test.BLOOD and e.new_test is Test.BLOOD


def test_never_testing_is_infrequent(desk, clinic):
    pols = {g: constant(g, gp.shape, Test.SKIN, Test.NONE) for g, gp in desk.groups.items()}
    est = estimate_frequencies(PolicySpec.optimal(pols), desk, horizon=20, replications=3,
                               clinic=clinic)
    for e in est.values():
        assert e.infrequent and e.count == 0 and e.new_test is Test.SKIN
        assert e.describe() == "infrequent, no trigger"


def test_period_from_rule(desk, clinic):
    est = estimate_frequencies(PolicySpec.threshold(), desk, horizon=60, replications=4,
                               clinic=clinic)
    assert est[G22].period_years == 3 and est[GroupId(3, 3)].period_years == 2
    assert est[G11].period_years == 1
    with pytest.raises(ValueError):
        estimate_frequencies(PolicySpec.threshold(), desk, horizon=5)


def test_frequency_reports():
    est = {G22: FrequencyEstimate(G22, Test.BLOOD, 3, 33.3, Test.BLOOD),
           G32: FrequencyEstimate(G32, Test.SKIN, "infrequent", 0.5, Test.BLOOD, 0.017,
                                  ((0.017, Test.SKIN), (0.022, Test.BLOOD)))}
    text = frequencies_text(est)
    assert "blood every 3 years" in text
    assert "skin when undetected share >= 1.7%" in text
    csv = frequencies_csv(est).splitlines()
    assert csv[0].startswith("group,new_test,ongoing_test,period_years")
    assert csv[2].endswith("skin>=0.0170;blood>=0.0220")


def test_frequencies_invariant_to_seed(desk, clinic, desk_policies):
    spec = PolicySpec.optimal(desk_policies)
    runs = [estimate_frequencies(spec, desk, seed=s, clinic=clinic) for s in range(5)]
    for g in desk.group_ids:
        counts = np.array([r[g].count for r in runs])
        assert np.abs(counts - counts.mean()).max() <= 1.0, (g, counts)


def test_thresholds_round_trip(desk, clinic, desk_policies):
    rules = []
    for g, pol in desk_policies.items():
        r = extract_thresholds(pol, g, default_fixed_x(desk, g, pol))
        for thr, _ in r.bands:
            assert 0.0 <= thr <= 1.0
        rules.append(r.to_rule())
    agree = decision_agreement(PolicySpec.optimal(desk_policies), PolicySpec.threshold(rules),
                               desk, years=100, replications=20, seed=0)
    assert agree >= 0.90
