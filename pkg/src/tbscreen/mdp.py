"""Per-group screening MDP: infection probability, transitions and stage costs."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels as K
from .clinic import ClinicModel
from .dist import ProbVec, binomial, convolve2, split3, truncated_poisson
from .model import ACTIONS, Action, GroupId, GroupParams, GroupState, SystemParams, Test

__all__ = [
    "GroupMdp",
    "TransitionDist",
    "build_group_mdp",
    "expected_stage_cost",
    "infection_probability",
    "stage_cost_components",
    "tested_counts",
    "transition_distribution",
]


def infection_probability(state: GroupState, gp: GroupParams, beta: float,
                          contact: float = 1.0) -> float:
    """Yearly infection probability of one employee given the group's state."""
    return float(K.infection_prob(state.new_arrivals, state.ongoing, state.undetected,
                                  contact * gp.transmission_prob,
                                  beta * gp.patient_contact_prob * gp.transmission_prob))


def tested_counts(state: GroupState, action: Action, leavers: int) -> tuple[int, int, int, int]:
    """(skin new, skin ongoing, blood, untested) head counts for the year."""
    x, y = state.new_arrivals, state.ongoing
    if not 0 <= leavers <= y:
        raise ValueError("leavers must lie in [0, y]")
    stay = y - leavers
    skin_new = x if action.new_test is Test.SKIN else 0
    skin_old = stay if action.ongoing_test is Test.SKIN else 0
    blood = (x if action.new_test is Test.BLOOD else 0) + (stay if action.ongoing_test is Test.BLOOD else 0)
    untested = stay if action.ongoing_test is Test.NONE else 0
    return skin_new, skin_old, blood, untested


def _miss_prob(gp: GroupParams, test: Test, is_new: bool) -> float:
    if test is Test.NONE:
        return 1.0
    if test is Test.BLOOD:
        return gp.blood_fn
    return gp.skin_fn ** 2 if is_new else gp.skin_fn


@dataclass(frozen=True)
class TransitionDist:
    """Law of the successor state for one (state, action) pair.

    New arrivals are independent of the rest, so the law is stored as the
    product of ``new_arrivals`` (over x') and ``yu[y', u']``.
    """

    new_arrivals: ProbVec
    yu: np.ndarray

    def prob(self, s: GroupState) -> float:
        x, y, u = s
        if not (0 <= y < self.yu.shape[0] and 0 <= u < self.yu.shape[1]):
            return 0.0
        return self.new_arrivals[x] * float(self.yu[y, u])

    @cached_property
    def mass(self) -> dict[GroupState, float]:
        out = {}
        ys, us = np.nonzero(self.yu)
        for x, px in enumerate(self.new_arrivals.mass):
            if px == 0:
                continue
            for y, u in zip(ys, us):
                out[GroupState(x, int(y), int(u))] = px * float(self.yu[y, u])
        return out

    def total(self) -> float:
        return self.new_arrivals.total() * float(self.yu.sum())

    def undetected_marginal(self) -> ProbVec:
        return ProbVec(self.yu.sum(axis=0))

    def ongoing_marginal(self) -> ProbVec:
        return ProbVec(self.yu.sum(axis=1))


def transition_distribution(state: GroupState, action: Action, gp: GroupParams,
                            beta: float, contact: float = 1.0) -> TransitionDist:
    """Exact successor law, built by conditioning on the number of leavers.

    For each leaver count the undetected/detected infections of new hires and
    of the tested (or untested) ongoing employees are split per person and
    convolved; y' and u' beyond their bounds collapse onto the bound.
    """
    x, y, _ = state
    alpha = infection_probability(state, gp, beta, contact)
    f_new = _miss_prob(gp, action.new_test, True)
    f_old = _miss_prob(gp, action.ongoing_test, False)
    my, mu = gp.max_ongoing, gp.max_undetected
    yu = np.zeros((my + 1, mu + 1))
    new_split = split3(x, alpha * f_new, alpha * (1.0 - f_new))
    leavers = binomial(y, gp.leave_prob)
    for l, pl in enumerate(leavers.mass):
        if pl == 0.0:
            continue
        stay = y - l
        joint = convolve2(new_split, split3(stay, alpha * f_old, alpha * (1.0 - f_old))).mass
        a_idx, b_idx = np.nonzero(joint)
        y_next = np.minimum(x + stay - a_idx - b_idx, my)
        u_next = np.minimum(a_idx, mu)
        np.add.at(yu, (y_next, u_next), pl * joint[a_idx, b_idx])
    return TransitionDist(truncated_poisson(gp.arrival_rate, gp.max_new), yu)


def stage_cost_components(x, y, u, action: Action, gp: GroupParams, sys: SystemParams,
                          clinic: ClinicModel, group: GroupId, contact: float = 1.0) -> dict:
    """Expected yearly quantities behind the stage cost; works on arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    n = x + y
    alpha = sys.beta * gp.patient_contact_prob * gp.transmission_prob + np.where(
        n > 0, contact * gp.transmission_prob * u / np.where(n > 0, n, 1.0), 0.0)
    alpha = np.clip(alpha, 0.0, 1.0)
    stay = y * (1.0 - gp.leave_prob)
    zero = np.zeros_like(x)
    skin = zero.copy()
    blood = zero.copy()
    positives = zero.copy()
    undetected = zero.copy()
    hours = zero.copy()

    if action.new_test is Test.BLOOD:
        blood = blood + x
        positives = positives + x * (alpha * (1 - gp.blood_fn) + (1 - alpha) * gp.blood_fp)
        undetected = undetected + x * alpha * gp.blood_fn
    else:
        skin = skin + x * (2 if sys.double_charge_new_skin else 1)
        fp_twice = 1.0 - (1.0 - gp.skin_fp) ** 2
        positives = positives + x * (alpha * (1 - gp.skin_fn ** 2) + (1 - alpha) * fp_twice)
        undetected = undetected + x * alpha * gp.skin_fn ** 2
    hours = hours + x * clinic.per_employee(group, action.new_test, True)

    if action.ongoing_test is Test.NONE:
        undetected = undetected + stay * alpha
    else:
        fp, fn = ((gp.skin_fp, gp.skin_fn) if action.ongoing_test is Test.SKIN
                  else (gp.blood_fp, gp.blood_fn))
        if action.ongoing_test is Test.SKIN:
            skin = skin + stay
        else:
            blood = blood + stay
        positives = positives + stay * (alpha * (1 - fn) + (1 - alpha) * fp)
        undetected = undetected + stay * alpha * fn
        hours = hours + stay * clinic.per_employee(group, action.ongoing_test, False)
    hours = hours + positives * clinic.xray_hours

    return {
        "blood_tests": blood,
        "skin_tests": skin,
        "positives": positives,
        "undetected": undetected,
        "hours": hours,
        "cost": (sys.test_cost_blood * blood + sys.test_cost_skin * skin
                 + sys.xray_cost * positives + gp.undetected_cost * undetected
                 + gp.lost_time_rate * hours),
    }


def expected_stage_cost(state: GroupState, action: Action, gp: GroupParams, sys: SystemParams,
                        w_model: ClinicModel, group: GroupId) -> float:
    """Expected one-year cost of tests, X-rays, undetected infections and lost time."""
    x, y, u = state
    comps = stage_cost_components(x, y, u, action, gp, sys, w_model, group,
                                  sys.contact(group, group))
    return float(comps["cost"])


@dataclass
class GroupMdp:
    """The decomposed MDP of one employee group.

    States are indexed ``s = (x * (My + 1) + y) * (Mu + 1) + u``; action
    indices follow :data:`model.ACTIONS`. ``cost`` holds the expected stage
    cost of every (state, action) pair.
    """

    group: GroupId
    params: GroupParams
    beta: float
    cost: np.ndarray
    arrivals: ProbVec
    contact: float = 1.0
    _ws: object = field(default=None, repr=False)

    def __post_init__(self):
        self.kparams = K.pack_params(self.params, self.beta, self.contact)
        self._ws = K.Workspace(self.params.max_new, self.params.max_ongoing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.params.shape

    @property
    def n_states(self) -> int:
        mx, my, mu = self.shape
        return mx * my * mu

    @property
    def actions(self) -> tuple[Action, ...]:
        return ACTIONS

    def index(self, s: GroupState) -> int:
        _, ny, nu = self.shape
        return (s[0] * ny + s[1]) * nu + s[2]

    def state(self, idx: int) -> GroupState:
        _, ny, nu = self.shape
        x, rest = divmod(int(idx), ny * nu)
        y, u = divmod(rest, nu)
        return GroupState(x, y, u)

    @property
    def states(self) -> list[GroupState]:
        return [self.state(i) for i in range(self.n_states)]

    def grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mx, my, mu = self.shape
        x, y, u = np.meshgrid(np.arange(mx), np.arange(my), np.arange(mu), indexing="ij")
        return x.ravel(), y.ravel(), u.ravel()

    def transition(self, s: GroupState, a: Action | int) -> TransitionDist:
        ai = a if isinstance(a, int) else ACTIONS.index(a)
        yu = K.yu_table(s[0], s[1], s[2], ai, self.kparams, *self._ws.args)
        return TransitionDist(self.arrivals, yu)

    def yu_table(self, idx: int, a: int) -> np.ndarray:
        x, y, u = self.state(idx)
        return K.yu_table(x, y, u, a, self.kparams, *self._ws.args)

    def reduce(self, V: np.ndarray) -> np.ndarray:
        """W[y, u] = sum_x P(x' = x) V[x, y, u]."""
        return np.tensordot(self.arrivals.mass, V.reshape(self.shape), axes=(0, 0))

    def q_values(self, V: np.ndarray, discount: float) -> np.ndarray:
        W = np.ascontiguousarray(self.reduce(V))
        return K.q_values(W, self.cost, discount, self.kparams, self._ws.pad, *self._ws.args)

    def policy_expect(self, V: np.ndarray, policy: np.ndarray) -> np.ndarray:
        W = np.ascontiguousarray(self.reduce(V))
        return K.policy_expect(W, np.asarray(policy, dtype=np.int64), self.kparams, self._ws.pad,
                               *self._ws.args)

    def evaluate(self, policy: np.ndarray, discount: float) -> np.ndarray:
        """Exact discounted cost of a stationary policy (action index per state)."""
        policy = np.asarray(policy, dtype=np.int64)
        mx, ny, nu = self.shape
        px = self.arrivals.mass
        Q = K.policy_kernel(policy, px, self.kparams, *self._ws.args)
        c = self.cost[np.arange(self.n_states), policy].reshape(mx, ny * nu)
        cbar = px @ c
        W = np.linalg.solve(np.eye(ny * nu) - discount * Q, cbar)
        ev = K.policy_expect(np.ascontiguousarray(W.reshape(ny, nu)), policy, self.kparams,
                             self._ws.pad, *self._ws.args)
        return self.cost[np.arange(self.n_states), policy] + discount * ev

    def transitions_csv(self, states=None) -> str:
        """Debug dump: state, action, successor, probability."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "u", "action", "x_next", "y_next", "u_next", "probability"])
        for idx in (range(self.n_states) if states is None else [self.index(s) for s in states]):
            s = self.state(idx)
            for ai, a in enumerate(ACTIONS):
                for succ, p in sorted(self.transition(s, ai).mass.items()):
                    w.writerow([*s, str(a), *succ, repr(float(p))])
        return buf.getvalue()


def build_group_mdp(sys: SystemParams, group: GroupId, clinic: ClinicModel) -> GroupMdp:
    gp = sys.groups[group]
    contact = sys.contact(group, group)
    mx, my, mu = gp.shape
    x, y, u = np.meshgrid(np.arange(mx), np.arange(my), np.arange(mu), indexing="ij")
    x, y, u = x.ravel(), y.ravel(), u.ravel()
    cost = np.empty((x.size, len(ACTIONS)))
    for ai, a in enumerate(ACTIONS):
        cost[:, ai] = stage_cost_components(x, y, u, a, gp, sys, clinic, group, contact)["cost"]
    return GroupMdp(group=group, params=gp, beta=sys.beta, cost=cost,
                    arrivals=truncated_poisson(gp.arrival_rate, gp.max_new), contact=contact)
