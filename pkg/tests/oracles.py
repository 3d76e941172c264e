"""Independent reference implementations used as test oracles.

Both follow the yearly dynamics person by person, with the two-round skin
test of a new hire modeled as two separate tests rather than through the
squared miss probability used by the library.
"""
import itertools

import numpy as np

from tbscreen.model import Test


def _alpha(x, y, u, gp, beta, contact=1.0):
    n = x + y
    a = beta * gp.patient_contact_prob * gp.transmission_prob
    if n > 0:
        a += contact * gp.transmission_prob * u / n
    return min(max(a, 0.0), 1.0)


def _test_probs(gp, test):
    return {Test.SKIN: (gp.skin_fp, gp.skin_fn), Test.BLOOD: (gp.blood_fp, gp.blood_fn)}[test]


def enumerate_yu(state, action, gp, beta):
    """Exact law of (y', u') by summing over every individual outcome.

    Only usable for a handful of employees (cost 5**x * 4**y).
    """
    x, y, u = state
    a = _alpha(x, y, u, gp, beta)
    pl = gp.leave_prob
    # new hire: (prob, infected, undetected)
    if action.new_test is Test.SKIN:
        fn = gp.skin_fn
        new = [(1 - a, 0, 0), (a * (1 - fn), 1, 0), (a * fn * (1 - fn), 1, 0),
               (a * fn * fn, 1, 1)]
    else:
        fn = gp.blood_fn
        new = [(1 - a, 0, 0), (a * (1 - fn), 1, 0), (a * fn, 1, 1)]
    # ongoing: (prob, stays, infected, undetected)
    if action.ongoing_test is Test.NONE:
        old = [(pl, 0, 0, 0), ((1 - pl) * (1 - a), 1, 0, 0), ((1 - pl) * a, 1, 1, 1)]
    else:
        fn = _test_probs(gp, action.ongoing_test)[1]
        old = [(pl, 0, 0, 0), ((1 - pl) * (1 - a), 1, 0, 0), ((1 - pl) * a * (1 - fn), 1, 1, 0),
               ((1 - pl) * a * fn, 1, 1, 1)]
    out = np.zeros((gp.max_ongoing + 1, gp.max_undetected + 1))
    for nc in itertools.product(new, repeat=x):
        pn = np.prod([c[0] for c in nc]) if nc else 1.0
        inf_n = sum(c[1] for c in nc)
        und_n = sum(c[2] for c in nc)
        for oc in itertools.product(old, repeat=y):
            p = pn * (np.prod([c[0] for c in oc]) if oc else 1.0)
            if p == 0:
                continue
            stay = sum(c[1] for c in oc)
            inf_o = sum(c[2] for c in oc)
            und_o = sum(c[3] for c in oc)
            yn = min(stay - inf_o + x - inf_n, gp.max_ongoing)
            un = min(und_o + und_n, gp.max_undetected)
            out[yn, un] += p
    return out


def simulate_stage(state, action, gp, sys, clinic, group, n, rng):
    """``n`` literal one-year rollouts; returns (x', y', u', cost) arrays."""
    x, y, u = state
    a = _alpha(x, y, u, gp, sys.beta, sys.contact(group, group))
    leavers = rng.binomial(y, gp.leave_prob, n)
    stay = y - leavers
    skin = np.zeros(n)
    blood = np.zeros(n)
    hours = np.zeros(n)

    inf_new = rng.binomial(x, a, n)
    clean_new = x - inf_new
    if action.new_test is Test.SKIN:
        fp, fn = gp.skin_fp, gp.skin_fn
        missed1 = rng.binomial(inf_new, fn)
        missed2 = rng.binomial(missed1, fn)             # follow-up test
        und_new = missed2
        fp1 = rng.binomial(clean_new, fp)
        fp2 = rng.binomial(clean_new - fp1, fp)         # second chance
        pos_new = (inf_new - und_new) + fp1 + fp2
        skin += x * (2 if sys.double_charge_new_skin else 1)
    else:
        fp, fn = gp.blood_fp, gp.blood_fn
        und_new = rng.binomial(inf_new, fn)
        pos_new = (inf_new - und_new) + rng.binomial(clean_new, fp)
        blood += x
    hours += x * clinic.per_employee(group, action.new_test, True)

    inf_old = rng.binomial(stay, a)
    if action.ongoing_test is Test.NONE:
        und_old = inf_old
        pos_old = np.zeros(n, dtype=np.int64)
    else:
        fp, fn = _test_probs(gp, action.ongoing_test)
        und_old = rng.binomial(inf_old, fn)
        pos_old = (inf_old - und_old) + rng.binomial(stay - inf_old, fp)
        if action.ongoing_test is Test.SKIN:
            skin += stay
        else:
            blood += stay
        hours += stay * clinic.per_employee(group, action.ongoing_test, False)
    positives = pos_new + pos_old
    hours += positives * clinic.xray_hours
    und = und_new + und_old
    cost = (sys.test_cost_blood * blood + sys.test_cost_skin * skin + sys.xray_cost * positives
            + gp.undetected_cost * und + gp.lost_time_rate * hours)
    x_next = np.minimum(rng.poisson(gp.arrival_rate, n), gp.max_new)
    y_next = np.minimum(stay - inf_old + x - inf_new, gp.max_ongoing)
    u_next = np.minimum(und, gp.max_undetected)
    return x_next, y_next, u_next, cost
