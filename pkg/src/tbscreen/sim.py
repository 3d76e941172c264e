"""Monte Carlo simulation of all groups under a screening policy.

Each group evolves on its own, one year at a time: ongoing employees leave,
everybody may get infected, tests catch some infections (and flag some
healthy employees), and a fresh cohort of new hires arrives. Randomness for
every (group, year, event) comes from its own substream. Two policies run
with the same seed therefore see the same draws wherever their states agree.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .clinic import ClinicModel, build_clinic_model
from .model import (ACTIONS, Action, GroupId, GroupParams, GroupState, SystemParams, Test,
                    initial_state)
from .seeding import substream
from .solve import Policy

__all__ = [
    "CalibrationError",
    "Comparison",
    "PolicyKind",
    "PolicySpec",
    "SimReport",
    "StepOutcome",
    "ThresholdRule",
    "calibrate_beta",
    "compare",
    "sample_step",
    "simulate",
    "step",
    "table1_rules",
    "transfer_state",
]

_STREAM_TAG = 2
_SAMPLE_YEAR = 2 ** 31      # year key reserved for one-step sampling
BURN_IN = 10
_ONGOING = (Test.NONE, Test.SKIN, Test.BLOOD)


class CalibrationError(RuntimeError):
    pass


class PolicyKind(enum.Enum):
    ANNUAL_SKIN = "current"
    OPTIMAL_LOOKUP = "optimal"
    THRESHOLD_RULE = "threshold"


def _action_index(new: Test, ongoing: Test) -> int:
    return ACTIONS.index(Action(new, ongoing))


@dataclass(frozen=True)
class ThresholdRule:
    """Ongoing-employee testing rule for one group.

    In epoch years (year % period_years == 0) the ongoing test is the test of
    the last band whose threshold the undetected share u / (x + y) reaches;
    below every band, and outside epochs, nobody is tested. A band at
    threshold 0 therefore means "always, every period_years years".
    """

    group: GroupId
    bands: tuple[tuple[float, Test], ...]
    period_years: int = 1
    new_test: Test = Test.BLOOD

    def __post_init__(self):
        if self.period_years < 1:
            raise ValueError("period_years must be at least 1")
        th = [t for t, _ in self.bands]
        if any(b < a for a, b in zip(th, th[1:])):
            raise ValueError("band thresholds must be nondecreasing")
        if any(not 0.0 <= t <= 1.0 for t in th):
            raise ValueError("band thresholds must lie in [0, 1]")
        if self.new_test is Test.NONE:
            raise ValueError("new hires must take a skin or a blood test")

    def choose(self, year: int, x, y, u) -> np.ndarray:
        x, y, u = (np.asarray(v) for v in (x, y, u))
        n = x + y
        share = np.divide(u, n, out=np.zeros(np.shape(n), dtype=float), where=n > 0)
        ongoing = np.zeros(share.shape, dtype=np.int64)
        if year % self.period_years == 0:
            for thr, test in self.bands:
                ongoing = np.where(share >= thr - 1e-12, _ONGOING.index(test), ongoing)
        return 2 * ongoing + (1 if self.new_test is Test.BLOOD else 0)


def table1_rules() -> tuple[ThresholdRule, ...]:
    """The practitioner rule set.

    Blood for new hires everywhere. Ongoing employees: physicians yearly,
    nurses in risk groups 2 and 3 every third year, other employees in risk
    group 3 every second year, the remaining groups only when the undetected
    share crosses a trigger.
    """
    B, S = Test.BLOOD, Test.SKIN
    G = GroupId
    return (
        ThresholdRule(G(1, 1), ((0.0, B),)),
        ThresholdRule(G(1, 2), ((0.0, B),)),
        ThresholdRule(G(1, 3), ((0.0, B),)),
        ThresholdRule(G(2, 1), ((0.016, B),)),
        ThresholdRule(G(2, 2), ((0.0, B),), period_years=3),
        ThresholdRule(G(2, 3), ((0.0, B),), period_years=3),
        ThresholdRule(G(3, 1), ((0.017, B),)),
        ThresholdRule(G(3, 2), ((0.017, S), (0.022, B))),
        ThresholdRule(G(3, 3), ((0.0, B),), period_years=2),
    )


def transfer_state(x, y, u, scale: float, shape: tuple[int, int, int]):
    """Map states of a large system onto the grid of a policy solved at ``scale``.

    Head counts scale linearly; the undetected count is chosen so that the
    undetected share u / (x + y), which drives the infection probability, is
    preserved. Results are clamped to the policy grid.
    """
    x, y, u = (np.asarray(v, dtype=float) for v in (x, y, u))
    if scale == 1.0:
        xd, yd, ud = x, y, u
    else:
        xd = np.floor(scale * x + 0.5)
        yd = np.floor(scale * y + 0.5)
        n, nd = x + y, xd + yd
        ud = np.floor(np.divide(u * nd, n, out=np.zeros_like(u), where=n > 0) + 0.5)
    mx, my, mu = shape
    return (np.clip(xd, 0, mx - 1).astype(np.int64), np.clip(yd, 0, my - 1).astype(np.int64),
            np.clip(ud, 0, mu - 1).astype(np.int64))


@dataclass(frozen=True)
class PolicySpec:
    """A simulatable policy: the yearly skin-test baseline, a solved lookup
    table per group, or a set of threshold rules."""

    kind: PolicyKind
    policies: dict = field(default_factory=dict)
    rules: tuple = ()
    scale: float = 1.0
    name: str = ""

    @classmethod
    def annual_skin(cls) -> "PolicySpec":
        return cls(PolicyKind.ANNUAL_SKIN, name="current")

    @classmethod
    def optimal(cls, policies: dict[GroupId, Policy], scale: float = 1.0) -> "PolicySpec":
        return cls(PolicyKind.OPTIMAL_LOOKUP, policies=dict(policies), scale=scale, name="optimal")

    @classmethod
    def threshold(cls, rules=None) -> "PolicySpec":
        rules = tuple(table1_rules() if rules is None else rules)
        if len({r.group for r in rules}) != len(rules):
            raise ValueError("at most one threshold rule per group")
        return cls(PolicyKind.THRESHOLD_RULE, rules=rules, name="threshold")

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    def choose(self, group: GroupId, year: int, x, y, u) -> np.ndarray:
        """Action indices (into ``ACTIONS``) for arrays of states."""
        shape = np.shape(x)
        if self.kind is PolicyKind.ANNUAL_SKIN:
            return np.full(shape, _action_index(Test.SKIN, Test.SKIN), dtype=np.int64)
        if self.kind is PolicyKind.THRESHOLD_RULE:
            for r in self.rules:
                if r.group == group:
                    return r.choose(year, x, y, u)
            return np.full(shape, _action_index(Test.BLOOD, Test.NONE), dtype=np.int64)
        pol = self.policies[group]
        xi, yi, ui = transfer_state(x, y, u, self.scale, pol.shape)
        return pol.index_grid()[xi, yi, ui]


# ---------------------------------------------------------------------------
# one year of one group

@dataclass
class StepOutcome:
    """Realized counts for one simulated year (arrays over replications)."""

    alpha: np.ndarray
    leavers: np.ndarray
    stay: np.ndarray
    infected_ongoing: np.ndarray
    infected_new: np.ndarray
    caught_ongoing: np.ndarray
    caught_new: np.ndarray
    false_pos_ongoing: np.ndarray
    false_pos_new: np.ndarray
    undetected_ongoing: np.ndarray
    undetected_new: np.ndarray
    skin_tests: np.ndarray
    blood_tests: np.ndarray
    ongoing_tested: np.ndarray
    hours: np.ndarray
    cost: np.ndarray
    next_new: np.ndarray
    next_ongoing: np.ndarray
    next_undetected: np.ndarray

    @property
    def infected(self) -> np.ndarray:
        return self.infected_ongoing + self.infected_new

    @property
    def positives(self) -> np.ndarray:
        return self.caught_ongoing + self.caught_new + self.false_pos_ongoing + self.false_pos_new


def _streams(seed: int, group: GroupId, year: int, n: int = 8):
    return [substream(seed, _STREAM_TAG, group.salary, group.risk, year, k) for k in range(n)]


def step(x, y, u, action, gp: GroupParams, sys: SystemParams, clinic: ClinicModel,
         group: GroupId, rngs) -> StepOutcome:
    """Advance one group by one year for arrays of states and action indices.

    ``rngs`` holds eight generators, one per random event, so that the draws
    for an event do not depend on which other events happened to be sampled.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    u = np.asarray(u, dtype=np.int64)
    action = np.broadcast_to(np.asarray(action, dtype=np.int64), x.shape)
    contact = sys.contact(group, group)
    n = x + y
    alpha = sys.beta * gp.patient_contact_prob * gp.transmission_prob + np.divide(
        contact * gp.transmission_prob * u, n, out=np.zeros(x.shape), where=n > 0)
    alpha = np.clip(alpha, 0.0, 1.0)
    ongoing = action // 2                      # 0 none, 1 skin, 2 blood
    new_blood = (action % 2) == 1

    leavers = rngs[0].binomial(y, gp.leave_prob)
    stay = y - leavers
    inf_old = rngs[1].binomial(stay, alpha)
    inf_new = rngs[2].binomial(x, alpha)

    fn_old = np.select([ongoing == 1, ongoing == 2], [gp.skin_fn, gp.blood_fn], 1.0)
    fp_old = np.select([ongoing == 1, ongoing == 2], [gp.skin_fp, gp.blood_fp], 0.0)
    fn_new = np.where(new_blood, gp.blood_fn, gp.skin_fn ** 2)
    fp_new = np.where(new_blood, gp.blood_fp, 1.0 - (1.0 - gp.skin_fp) ** 2)
    caught_old = rngs[3].binomial(inf_old, 1.0 - fn_old)
    false_old = rngs[4].binomial(stay - inf_old, fp_old)
    caught_new = rngs[5].binomial(inf_new, 1.0 - fn_new)
    false_new = rngs[6].binomial(x - inf_new, fp_new)
    arrivals = np.minimum(rngs[7].poisson(gp.arrival_rate, size=x.shape), gp.max_new)

    tested_old = np.where(ongoing > 0, stay, 0)
    skin = np.where(new_blood, 0, x * (2 if sys.double_charge_new_skin else 1)) + np.where(ongoing == 1, stay, 0)
    blood = np.where(new_blood, x, 0) + np.where(ongoing == 2, stay, 0)
    positives = caught_old + false_old + caught_new + false_new
    h_new = np.where(new_blood, clinic.per_employee(group, Test.BLOOD, True),
                     clinic.per_employee(group, Test.SKIN, True))
    h_old = np.select([ongoing == 1, ongoing == 2],
                      [clinic.per_employee(group, Test.SKIN, False),
                       clinic.per_employee(group, Test.BLOOD, False)], 0.0)
    hours = x * h_new + stay * h_old + positives * clinic.xray_hours
    und_old = inf_old - caught_old
    und_new = inf_new - caught_new
    cost = (sys.test_cost_blood * blood + sys.test_cost_skin * skin + sys.xray_cost * positives
            + gp.undetected_cost * (und_old + und_new) + gp.lost_time_rate * hours)

    out = StepOutcome(
        alpha=alpha, leavers=leavers, stay=stay, infected_ongoing=inf_old, infected_new=inf_new,
        caught_ongoing=caught_old, caught_new=caught_new, false_pos_ongoing=false_old,
        false_pos_new=false_new, undetected_ongoing=und_old, undetected_new=und_new,
        skin_tests=skin, blood_tests=blood, ongoing_tested=tested_old, hours=hours, cost=cost,
        next_new=arrivals,
        next_ongoing=np.minimum(stay - inf_old + x - inf_new, gp.max_ongoing),
        next_undetected=np.minimum(und_old + und_new, gp.max_undetected),
    )
    check_accounting(x, y, out)
    return out


def check_accounting(x, y, o: StepOutcome) -> None:
    """Integer conservation of one simulated year; raises on any violation."""
    ok = (
        (o.leavers + o.stay == y).all()
        and (o.caught_ongoing + o.undetected_ongoing == o.infected_ongoing).all()
        and (o.caught_new + o.undetected_new == o.infected_new).all()
        and (o.infected_ongoing <= o.stay).all()
        and (o.infected_new <= x).all()
        and (o.false_pos_ongoing <= o.stay - o.infected_ongoing).all()
        and (o.false_pos_new <= x - o.infected_new).all()
        and (o.next_ongoing <= o.stay - o.infected_ongoing + x - o.infected_new).all()
        and (o.next_undetected <= o.undetected_ongoing + o.undetected_new).all()
        and (np.minimum(o.leavers, o.stay) >= 0).all()
    )
    if not ok:
        raise RuntimeError("simulation accounting identity violated")


def sample_step(group: GroupId, state: GroupState, action: Action | int, sys: SystemParams,
                clinic: ClinicModel, n: int, seed: int) -> StepOutcome:
    """``n`` independent one-year outcomes from a fixed (state, action)."""
    a = action if isinstance(action, (int, np.integer)) else ACTIONS.index(action)
    x, y, u = (np.full(n, v, dtype=np.int64) for v in state)
    rngs = [substream(seed, _STREAM_TAG, group.salary, group.risk, _SAMPLE_YEAR, k) for k in range(8)]
    return step(x, y, u, np.full(n, a), sys.groups[group], sys, clinic, group, rngs)


# ---------------------------------------------------------------------------
# reports

def _half_width(samples: np.ndarray) -> float:
    r = samples.size
    if r < 2:
        return math.nan
    return float(stats.t.ppf(0.975, r - 1) * samples.std(ddof=1) / math.sqrt(r))


@dataclass
class GroupSummary:
    cost: float
    cost_hw: float
    infection_rate: float
    rate_hw: float
    ongoing_tests: float        # mean count of years with an ongoing test, per replication
    ongoing_blood: float
    ongoing_skin: float
    mean_size: float


@dataclass
class SimReport:
    policy: str
    seed: int
    years: int
    replications: int
    burn_in: int
    avg_yearly_cost: float
    cost_hw: float
    avg_infection_rate: float
    rate_hw: float
    avg_alpha: float
    alpha_hw: float
    groups: dict[GroupId, GroupSummary]
    rep_costs: np.ndarray
    rep_rates: np.ndarray
    rep_alphas: np.ndarray
    rep_ongoing_tests: dict

    @property
    def horizon(self) -> int:
        return self.years - self.burn_in

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "group", "avg_yearly_cost", "cost_hw95", "infection_rate",
                    "rate_hw95", "ongoing_tests_per_horizon", "mean_size"])
        w.writerow([self.policy, "all", _f(self.avg_yearly_cost), _f(self.cost_hw),
                    _f(self.avg_infection_rate, 6), _f(self.rate_hw, 6), "", ""])
        for g in sorted(self.groups):
            s = self.groups[g]
            w.writerow([self.policy, str(g), _f(s.cost), _f(s.cost_hw), _f(s.infection_rate, 6),
                        _f(s.rate_hw, 6), _f(s.ongoing_tests), _f(s.mean_size)])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"policy {self.policy}: {self.replications} replications x {self.years} years "
            f"(first {self.burn_in} dropped), seed {self.seed}",
            f"  average yearly cost   {self.avg_yearly_cost:12.2f} +/- {self.cost_hw:.2f}",
            f"  average infection rate {100 * self.avg_infection_rate:10.3f}% +/- "
            f"{100 * self.rate_hw:.3f}",
            f"  average infection prob {100 * self.avg_alpha:10.3f}% +/- {100 * self.alpha_hw:.3f}",
            "  group      cost        rate   tests/horizon",
        ]
        for g in sorted(self.groups):
            s = self.groups[g]
            lines.append(f"  {str(g):5s} {s.cost:11.2f} {100 * s.infection_rate:9.3f}% "
                         f"{s.ongoing_tests:10.1f}")
        return "\n".join(lines) + "\n"


def _f(v: float, digits: int = 2) -> str:
    return "nan" if v is None or not math.isfinite(v) else f"{v:.{digits}f}"


# ---------------------------------------------------------------------------
# simulation driver

def run_years(policy: PolicySpec, sys: SystemParams, years: int, replications: int, seed: int,
              clinic: ClinicModel | None = None, groups=None):
    """Yield (year, group, states_before, actions, outcome) for every simulated year."""
    if years < 1 or replications < 1:
        raise ValueError("years and replications must be at least 1")
    clinic = clinic or build_clinic_model(sys, seed=seed)
    groups = list(groups or sys.group_ids)
    state = {}
    for g in groups:
        s0 = initial_state(sys, g)
        state[g] = tuple(np.full(replications, v, dtype=np.int64) for v in s0)
    for t in range(years):
        for g in groups:
            x, y, u = state[g]
            a = policy.choose(g, t, x, y, u)
            o = step(x, y, u, a, sys.groups[g], sys, clinic, g, _streams(seed, g, t))
            yield t, g, (x, y, u), a, o
            state[g] = (o.next_new, o.next_ongoing, o.next_undetected)


def simulate(policy: PolicySpec, sys: SystemParams, years: int, replications: int, seed: int,
             clinic: ClinicModel | None = None, burn_in: int = BURN_IN) -> SimReport:
    """Yearly-average cost and infection rate under ``policy``.

    The first ``burn_in`` years are simulated but left out of the averages
    (no burn-in when the run is not longer than it). The infection rate of a
    year is newly infected over x + y, pooled over groups; ``avg_alpha`` is
    the size-weighted mean infection probability.
    """
    burn = burn_in if years > burn_in else 0
    R = replications
    G = list(sys.group_ids)
    h = years - burn
    cost = np.zeros((R, h))
    inf = np.zeros((R, h))
    size = np.zeros((R, h))
    alpha_w = np.zeros((R, h))
    g_cost = {g: np.zeros(R) for g in G}
    g_inf = {g: np.zeros(R) for g in G}
    g_size = {g: np.zeros(R) for g in G}
    g_tests = {g: np.zeros(R) for g in G}
    g_blood = {g: np.zeros(R) for g in G}
    g_skin = {g: np.zeros(R) for g in G}
    for t, g, (x, y, _), a, o in run_years(policy, sys, years, R, seed, clinic):
        if t < burn:
            continue
        k = t - burn
        n = x + y
        cost[:, k] += o.cost
        inf[:, k] += o.infected
        size[:, k] += n
        alpha_w[:, k] += o.alpha * n
        g_cost[g] += o.cost
        g_inf[g] += o.infected
        g_size[g] += n
        tested = (a // 2) > 0
        g_tests[g] += tested
        g_blood[g] += (a // 2) == 2
        g_skin[g] += (a // 2) == 1
    rate_year = np.divide(inf, size, out=np.zeros_like(inf), where=size > 0)
    alpha_year = np.divide(alpha_w, size, out=np.zeros_like(inf), where=size > 0)
    rep_cost = cost.mean(axis=1)
    rep_rate = rate_year.mean(axis=1)
    rep_alpha = alpha_year.mean(axis=1)
    summaries = {}
    for g in G:
        gr = np.divide(g_inf[g], g_size[g], out=np.zeros(R), where=g_size[g] > 0)
        summaries[g] = GroupSummary(
            cost=float(g_cost[g].mean() / h), cost_hw=_half_width(g_cost[g] / h),
            infection_rate=float(gr.mean()), rate_hw=_half_width(gr),
            ongoing_tests=float(g_tests[g].mean()), ongoing_blood=float(g_blood[g].mean()),
            ongoing_skin=float(g_skin[g].mean()), mean_size=float(g_size[g].mean() / h))
    return SimReport(
        policy=policy.label, seed=seed, years=years, replications=R, burn_in=burn,
        avg_yearly_cost=float(rep_cost.mean()), cost_hw=_half_width(rep_cost),
        avg_infection_rate=float(rep_rate.mean()), rate_hw=_half_width(rep_rate),
        avg_alpha=float(rep_alpha.mean()), alpha_hw=_half_width(rep_alpha),
        groups=summaries, rep_costs=rep_cost, rep_rates=rep_rate, rep_alphas=rep_alpha,
        rep_ongoing_tests=g_tests)


# ---------------------------------------------------------------------------
# calibration

def calibrate_beta(target_rate: float, sys: SystemParams, tol: float = 1e-3, seed: int = 0,
                   years: int = 200, replications: int = 20, metric: str = "alpha",
                   clinic: ClinicModel | None = None, max_iter: int = 60,
                   history: list | None = None) -> float:
    """Patient-contact share beta in [0, 1] giving the target long-run rate.

    Bisection under the yearly skin-test policy. ``metric`` selects the
    long-run quantity matched to the target: "alpha" (mean yearly infection
    probability, the default) or "infection_rate" (newly infected over
    headcount). Every evaluation reuses ``seed``; the evaluated rates must be
    nondecreasing in beta, otherwise the calibration is rejected.
    """
    if not 0.0 <= target_rate < 1.0:
        raise ValueError("target_rate must lie in [0, 1)")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if years < 200 or replications < 20:
        raise ValueError("calibration needs years >= 200 and replications >= 20")
    if metric not in ("alpha", "infection_rate"):
        raise ValueError(f"unknown calibration metric {metric!r}")
    policy = PolicySpec.annual_skin()
    evals: list[tuple[float, float]] = [] if history is None else history

    def rate(beta: float) -> float:
        rep = simulate(policy, replace(sys, beta=beta), years, replications, seed, clinic)
        r = rep.avg_alpha if metric == "alpha" else rep.avg_infection_rate
        evals.append((beta, r))
        ordered = sorted(evals)
        if any(b[1] < a[1] - 1e-12 for a, b in zip(ordered, ordered[1:])):
            raise CalibrationError(f"simulated rate is not monotone in beta: {ordered}")
        return r

    lo, hi = 0.0, 1.0
    r_lo = rate(lo)
    if abs(r_lo - target_rate) <= tol:
        return lo
    r_hi = rate(hi)
    if abs(r_hi - target_rate) <= tol:
        return hi
    if not r_lo < target_rate < r_hi:
        raise CalibrationError(
            f"target {target_rate} is outside the reachable range: rate({lo}) = {r_lo:.5f}, "
            f"rate({hi}) = {r_hi:.5f}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = rate(mid)
        if abs(r - target_rate) <= tol:
            return mid
        if r < target_rate:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"bisection did not reach tol {tol} in {max_iter} steps; "
                           f"bracket [{lo}, {hi}]")


# ---------------------------------------------------------------------------
# comparison

@dataclass
class Comparison:
    reports: list[SimReport]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "avg_yearly_cost", "cost_hw95", "avg_infection_rate", "rate_hw95",
                    "avg_infection_prob", "prob_hw95", "years", "replications", "seed"])
        for r in self.reports:
            w.writerow([r.policy, _f(r.avg_yearly_cost), _f(r.cost_hw),
                        _f(r.avg_infection_rate, 6), _f(r.rate_hw, 6), _f(r.avg_alpha, 6),
                        _f(r.alpha_hw, 6), r.years, r.replications, r.seed])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'policy':<12s}{'avg yearly cost':>22s}{'avg infection rate':>24s}"]
        for r in self.reports:
            lines.append(f"{r.policy:<12s}{r.avg_yearly_cost:>12.2f} +/- {r.cost_hw:<7.2f}"
                         f"{100 * r.avg_infection_rate:>14.3f}% +/- {100 * r.rate_hw:.3f}")
        return "\n".join(lines) + "\n"

    def paired_cost_difference(self, i: int, j: int) -> tuple[float, float]:
        """Mean and 95% half-width of cost(i) - cost(j) over common-random-number pairs."""
        d = self.reports[i].rep_costs - self.reports[j].rep_costs
        return float(d.mean()), _half_width(d)


def compare(policies, sys: SystemParams, years: int, replications: int, seed: int,
            clinic: ClinicModel | None = None, burn_in: int = BURN_IN) -> Comparison:
    """Simulate several policies on common random numbers."""
    policies = list(policies)
    if len(policies) < 2:
        raise ValueError("compare needs at least two policies")
    clinic = clinic or build_clinic_model(sys, seed=seed)
    return Comparison([simulate(p, sys, years, replications, seed, clinic, burn_in)
                       for p in policies])
