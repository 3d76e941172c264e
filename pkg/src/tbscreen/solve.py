"""Optimal per-group policies: exact dynamic programming and column generation.

Two independent routes to the same answer. ``value_iteration`` solves the
Bellman equation of a :class:`GroupMdp` directly. ``column_generation`` solves
the dual linear program over occupation measures delta(s, a), starting from a
small restricted master and adding columns whose reduced cost is negative.
Since each group's LP is the exact LP of its MDP, the two agree at
convergence; the tests rely on that.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import highspy
import numpy as np
from scipy import optimize, sparse

from .clinic import ClinicModel
from .mdp import GroupMdp, TransitionDist, build_group_mdp
from .model import ACTIONS, Action, GroupId, GroupState, SystemParams, Test, initial_state

__all__ = [
    "Column",
    "ColumnGenerationError",
    "ConvergenceError",
    "GroupSolution",
    "LpError",
    "LpInfeasible",
    "LpProblem",
    "LpSolution",
    "LpUnbounded",
    "Policy",
    "TabularMdp",
    "ValueFunction",
    "assignment_pricing",
    "column_generation",
    "greedy",
    "initial_distribution",
    "price_columns",
    "restricted_master",
    "solve_lp",
    "solve_system",
    "solver_report_csv",
    "value_iteration",
]

DEFAULT_TOL = 1e-4
COLUMNS_PER_ROUND = 16


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class ColumnGenerationError(RuntimeError):
    def __init__(self, message: str, bound: float):
        super().__init__(message)
        self.bound = bound


class LpError(RuntimeError):
    pass


class LpInfeasible(LpError):
    pass


class LpUnbounded(LpError):
    pass


# ---------------------------------------------------------------------------
# value function and policy containers

@dataclass(frozen=True)
class ValueFunction:
    """Expected discounted cost per state, stored flat in state-index order."""

    group: GroupId
    shape: tuple[int, int, int]
    values: np.ndarray

    def __getitem__(self, s: GroupState) -> float:
        return float(self.values.reshape(self.shape)[tuple(s)])

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.shape)


@dataclass(frozen=True)
class Policy:
    """Stationary policy: an action index (into ``ACTIONS``) per state."""

    group: GroupId
    shape: tuple[int, int, int]
    actions: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions)
        if a.size != math.prod(self.shape):
            raise ValueError("policy size does not match the state grid")
        if a.size and (a.min() < 0 or a.max() >= len(ACTIONS)):
            raise ValueError("policy holds an unknown action index")

    def __getitem__(self, s: GroupState) -> Action:
        return ACTIONS[int(self.index_grid()[self.clamp(s)])]

    def clamp(self, s) -> tuple[int, int, int]:
        return tuple(int(min(max(v, 0), m - 1)) for v, m in zip(s, self.shape))

    def index_grid(self) -> np.ndarray:
        return np.asarray(self.actions).reshape(self.shape)

    def ongoing_codes(self) -> np.ndarray:
        """Region-map codes (1 none, 2 skin, 3 blood) over the full grid."""
        return np.asarray(self.actions).reshape(self.shape) // 2 + 1

    def new_tests(self) -> np.ndarray:
        """1 where new hires take blood, 0 for skin."""
        return np.asarray(self.actions).reshape(self.shape) % 2

    @classmethod
    def constant(cls, group: GroupId, shape, action: Action) -> "Policy":
        return cls(group, tuple(shape), np.full(math.prod(shape), ACTIONS.index(action), dtype=np.int64))


def greedy(q: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Per-row argmin, preferring the lowest action index among near-ties."""
    best = q.min(axis=1, keepdims=True)
    return np.argmax(q <= best + tol, axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# exact dynamic programming

class TabularMdp:
    """A small explicit MDP with the interface the solvers expect.

    ``P[a]`` is the state-to-state transition matrix of action ``a`` and
    ``cost[s, a]`` the stage cost. At most ``len(ACTIONS)`` actions.
    """

    def __init__(self, P, cost, group=None):
        self.P = np.asarray(P, dtype=float)
        self.cost = np.asarray(cost, dtype=float)
        n_actions, n, n2 = self.P.shape
        if n != n2 or self.cost.shape != (n, n_actions):
            raise ValueError("P must be (actions, n, n) and cost (n, actions)")
        if n_actions > len(ACTIONS):
            raise ValueError(f"at most {len(ACTIONS)} actions")
        if not np.allclose(self.P.sum(axis=2), 1.0):
            raise ValueError("transition rows must sum to 1")
        self.group = group
        self.shape = (n, 1, 1)
        self.n_states = n

    def q_values(self, V, discount):
        return self.cost + discount * np.einsum("asn,n->sa", self.P, V)

    def evaluate(self, policy, discount):
        rows = np.arange(self.n_states)
        P = self.P[policy, rows, :]
        return np.linalg.solve(np.eye(self.n_states) - discount * P, self.cost[rows, policy])


def value_iteration(mdp: GroupMdp, discount: float, tol: float = DEFAULT_TOL,
                    accelerate: bool = True, max_iter: int | None = None,
                    history: list | None = None) -> tuple[ValueFunction, Policy]:
    """Minimal expected discounted cost and a greedy optimal policy.

    With ``accelerate`` each round evaluates the current greedy policy exactly
    (policy iteration), which converges in a handful of rounds. Without it,
    plain Bellman sweeps are used. Either way the loop stops once the
    sup-norm Bellman residual of the returned values is at most ``tol``.
    Residuals per round are appended to ``history`` when given.
    """
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 200 if accelerate else 20000
    V = np.zeros(mdp.n_states)
    residual = math.inf
    for _ in range(max_iter):
        q = mdp.q_values(V, discount)
        TV = q.min(axis=1)
        residual = float(np.abs(TV - V).max())
        if history is not None:
            history.append(residual)
        if residual <= tol:
            return (ValueFunction(mdp.group, mdp.shape, V),
                    Policy(mdp.group, mdp.shape, greedy(q, tol)))
        V = mdp.evaluate(greedy(q), discount) if accelerate else TV
    raise ConvergenceError(
        f"value iteration for group {mdp.group} did not reach tol {tol:g} in {max_iter} "
        f"rounds; last Bellman residual {residual:.3e}", residual)


# ---------------------------------------------------------------------------
# LP contract

@dataclass
class LpProblem:
    """min c.x  s.t.  A x >= b,  A_eq x = b_eq,  x >= 0."""

    c: np.ndarray
    A: object
    b: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray | None = None


@dataclass
class LpSolution:
    x: np.ndarray
    duals: np.ndarray          # one per >= row, nonnegative
    objective: float
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _new_highs() -> highspy.Highs:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    h.setOptionValue("dual_feasibility_tolerance", 1e-9)
    return h


def _add_rows(h: highspy.Highs, M, lower, upper) -> None:
    M = sparse.csr_matrix(M)
    h.addRows(M.shape[0], np.asarray(lower, dtype=float), np.asarray(upper, dtype=float),
              M.nnz, M.indptr[:-1].astype(np.int32), M.indices.astype(np.int32),
              M.data.astype(float))


def _run(h: highspy.Highs) -> None:
    h.run()
    status = h.getModelStatus()
    if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        h.setOptionValue("presolve", "off")
        h.run()
        status = h.getModelStatus()
    if status == highspy.HighsModelStatus.kInfeasible:
        raise LpInfeasible("LP is infeasible")
    if status == highspy.HighsModelStatus.kUnbounded:
        raise LpUnbounded("LP is unbounded")
    if status != highspy.HighsModelStatus.kOptimal:
        raise LpError(f"LP solver stopped with status {h.modelStatusToString(status)}")


def solve_lp(p: LpProblem) -> LpSolution:
    c = np.asarray(p.c, dtype=float)
    b = np.asarray(p.b, dtype=float)
    h = _new_highs()
    inf = highspy.kHighsInf
    n = c.size
    h.addVars(n, np.zeros(n), np.full(n, inf))
    h.changeColsCost(n, np.arange(n, dtype=np.int32), c)
    _add_rows(h, p.A, b, np.full(b.size, inf))
    n_eq = 0
    if p.A_eq is not None and np.size(p.b_eq):
        beq = np.asarray(p.b_eq, dtype=float)
        _add_rows(h, p.A_eq, beq, beq)
        n_eq = beq.size
    _run(h)
    sol = h.getSolution()
    rd = np.asarray(sol.row_dual)
    return LpSolution(x=np.asarray(sol.col_value), duals=rd[:b.size],
                      objective=float(h.getInfo().objective_function_value),
                      eq_duals=rd[b.size:b.size + n_eq])


# ---------------------------------------------------------------------------
# column generation

class Column:
    """A (state, action) variable of the occupation-measure LP."""

    __slots__ = ("mdp", "index", "action_index", "__dict__")

    def __init__(self, mdp: GroupMdp, index: int, action_index: int):
        self.mdp = mdp
        self.index = int(index)
        self.action_index = int(action_index)

    @property
    def state(self) -> GroupState:
        return self.mdp.state(self.index)

    @property
    def action(self) -> Action:
        return ACTIONS[self.action_index]

    @property
    def cost(self) -> float:
        return float(self.mdp.cost[self.index, self.action_index])

    @property
    def transition(self) -> TransitionDist:
        return self.mdp.transition(self.state, self.action_index)

    @cached_property
    def flow(self) -> tuple[np.ndarray, np.ndarray]:
        """Sparse law of (y', u') as (flat grid index, probability)."""
        yu = self.mdp.yu_table(self.index, self.action_index).ravel()
        nz = np.flatnonzero(yu)
        return nz, yu[nz]

    @property
    def key(self) -> tuple[int, int]:
        return self.index, self.action_index

    def __eq__(self, other):
        return isinstance(other, Column) and self.key == other.key and self.mdp is other.mdp

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Column({tuple(self.state)}, {self.action})"


def initial_distribution(mdp: GroupMdp, start: GroupState | None = None,
                         point_weight: float = 0.5) -> np.ndarray:
    """Initial-state weights for the LP objective.

    A mixture of a point mass at ``start`` and the uniform law. Full support
    pins the LP duals to the optimal value on every state, not only the ones
    reachable from ``start``.
    """
    g = np.full(mdp.n_states, (1.0 - point_weight) / mdp.n_states)
    if start is not None:
        g[mdp.index(start)] += point_weight
    else:
        g += point_weight / mdp.n_states
    return g


class MasterLp:
    """The restricted master kept alive between pricing rounds.

    Rows: one ">= gamma(s)" row per state, reading
    sum_a delta(s,a) - discount * P(x' = x_s) * f(y_s, u_s), and one flow row
    per (y, u) cell defining f(k) = sum over columns of P((y', u') = k) delta.
    The flow variables keep the matrix sparse (a column touches its own state
    row and its successor cells, not every successor state), and new columns
    are appended so that each re-solve starts from the previous basis.
    """

    def __init__(self, mdp: GroupMdp, gamma, discount: float):
        self.mdp = mdp
        self.h = _new_highs()
        mx, ny, nu = mdp.shape
        n_states, n_flow = mdp.n_states, ny * nu
        self.n_states = n_states
        inf = highspy.kHighsInf
        g = np.asarray(gamma, dtype=float)
        if g.shape != (n_states,):
            raise ValueError("gamma must give one weight per state")
        self.h.addRows(n_states, g, np.full(n_states, inf), 0, np.zeros(n_states, dtype=np.int32),
                       np.zeros(0, dtype=np.int32), np.zeros(0))
        self.h.addRows(n_flow, np.zeros(n_flow), np.zeros(n_flow), 0,
                       np.zeros(n_flow, dtype=np.int32), np.zeros(0, dtype=np.int32), np.zeros(0))
        # flow variables: column k has +1 on flow row k and the state-row coupling
        px = mdp.arrivals.mass
        flat = np.arange(n_states)
        k_of = flat % n_flow
        flow = sparse.csc_matrix(
            (np.concatenate([np.ones(n_flow), -discount * px[flat // n_flow]]),
             (np.concatenate([n_states + np.arange(n_flow), flat]),
              np.concatenate([np.arange(n_flow), k_of]))),
            shape=(n_states + n_flow, n_flow))
        self.h.addCols(n_flow, np.zeros(n_flow), np.zeros(n_flow), np.full(n_flow, inf),
                       flow.nnz, flow.indptr[:-1].astype(np.int32), flow.indices.astype(np.int32),
                       flow.data)
        self.columns: list[Column] = []
        # costs enter divided by this so that duals stay O(1/(1 - discount))
        self.scale = max(float(np.abs(mdp.cost).max()), 1.0)

    def add(self, columns) -> None:
        columns = list(columns)
        if not columns:
            return
        starts, idx, val = [], [], []
        pos = 0
        for col in columns:
            if col.mdp is not self.mdp:
                raise ValueError("column belongs to a different MDP")
            k, p = col.flow
            starts.append(pos)
            idx.append(np.array([col.index]))
            idx.append(self.n_states + k)
            val.append(np.array([1.0]))
            val.append(-p)
            pos += 1 + k.size
        n = len(columns)
        self.h.addCols(n, np.array([c.cost for c in columns]) / self.scale, np.zeros(n),
                       np.full(n, highspy.kHighsInf), pos, np.array(starts, dtype=np.int32),
                       np.concatenate(idx).astype(np.int32), np.concatenate(val))
        self.columns.extend(columns)

    def solve(self) -> tuple[np.ndarray, float]:
        if not self.columns:
            raise ValueError("the restricted master needs at least one column")
        try:
            _run(self.h)
        except LpInfeasible as exc:
            raise LpInfeasible(
                "restricted master is infeasible; add a column for every state with positive "
                "initial weight (e.g. one (blood, none) column per state)") from exc
        duals = np.asarray(self.h.getSolution().row_dual)[: self.n_states] * self.scale
        return duals, float(self.h.getInfo().objective_function_value) * self.scale

    def primal(self) -> np.ndarray:
        """Occupation measure delta of every column, in insertion order."""
        x = np.asarray(self.h.getSolution().col_value)
        return x[x.size - len(self.columns):]


class StructuredMaster:
    """Exact restricted master for large groups, solved as a restricted MDP.

    When every state owns at least one column and gamma is positive
    everywhere, the restricted master is the LP of the same MDP with each
    state limited to the actions of its columns. Its optimal duals are then
    that MDP's value function, which policy iteration (a block-pivoting
    simplex method for this LP) finds exactly, without forming the matrix.
    """

    def __init__(self, mdp: GroupMdp, gamma, discount: float):
        self.mdp = mdp
        self.gamma = np.asarray(gamma, dtype=float)
        if self.gamma.shape != (mdp.n_states,):
            raise ValueError("gamma must give one weight per state")
        if (self.gamma <= 0).any():
            raise ValueError("the structured master needs gamma > 0 on every state")
        self.discount = discount
        self.allowed = np.zeros((mdp.n_states, len(ACTIONS)), dtype=bool)
        self.columns: list[Column] = []
        self._policy = None

    def add(self, columns) -> None:
        for col in columns:
            self.allowed[col.index, col.action_index] = True
            self.columns.append(col)

    def solve(self, max_rounds: int = 500) -> tuple[np.ndarray, float]:
        if not self.allowed.any(axis=1).all():
            raise LpInfeasible(
                "restricted master is infeasible; add a column for every state with positive "
                "initial weight (e.g. one (blood, none) column per state)")
        rows = np.arange(self.mdp.n_states)
        pol = self._policy
        if pol is None:
            pol = np.argmax(self.allowed, axis=1)
        for _ in range(max_rounds):
            V = self.mdp.evaluate(pol, self.discount)
            q = np.where(self.allowed, self.mdp.q_values(V, self.discount), np.inf)
            best = q.min(axis=1)
            # switch only on strict improvement, which rules out cycling
            slack = 1e-10 * max(1.0, float(np.abs(V).max()))
            improve = best < q[rows, pol] - slack
            if not improve.any():
                self._policy = pol
                return V, float(self.gamma @ V)
            pol = np.where(improve, greedy(q), pol)
        raise LpError("structured master did not converge")


def restricted_master(columns, gamma, discount: float) -> tuple[np.ndarray, float]:
    """Solve the LP restricted to ``columns``; return (state duals, objective)."""
    columns = list(columns)
    if not columns:
        raise ValueError("the restricted master needs at least one column")
    master = MasterLp(columns[0].mdp, gamma, discount)
    master.add(columns)
    return master.solve()


def reduced_costs(duals: np.ndarray, mdp: GroupMdp, discount: float) -> np.ndarray:
    """c(s,a) - v(s) + discount * E[v(s') | s, a] for every pair."""
    return mdp.q_values(np.asarray(duals, dtype=float), discount) - np.asarray(duals)[:, None]


def price_columns(duals, mdp: GroupMdp, discount: float, count: int = 1):
    """Most negative reduced-cost column(s) by exhaustive enumeration.

    Returns ``(best, reduced_cost)`` for ``count == 1``; otherwise a list of
    up to ``count`` (column, reduced_cost) pairs in ascending order.
    """
    duals = np.zeros(mdp.n_states) if duals is None else np.asarray(duals, dtype=float)
    f = reduced_costs(duals, mdp, discount).ravel()
    if count == 1:
        k = int(np.argmin(f))
        s, a = divmod(k, len(ACTIONS))
        return Column(mdp, s, a), float(f[k])
    order = np.argsort(f, kind="stable")[:count]
    return [(Column(mdp, *divmod(int(k), len(ACTIONS))), float(f[k])) for k in order]


def assignment_pricing(duals, mdp: GroupMdp, discount: float) -> tuple[tuple[int, int], float]:
    """Pricing as a 0/1 assignment problem, solved by a MILP solver.

    Binary z(s,a) with sum z = 1 and objective sum f(s,a) z(s,a). Used only
    to cross-check the enumeration on small instances.
    """
    f = reduced_costs(np.asarray(duals, dtype=float), mdp, discount).ravel()
    res = optimize.milp(f, integrality=np.ones(f.size),
                        bounds=optimize.Bounds(0, 1),
                        constraints=optimize.LinearConstraint(np.ones((1, f.size)), 1, 1))
    if res.status != 0:
        raise LpError(f"assignment pricing failed: {res.message}")
    k = int(np.argmax(res.x))
    return divmod(k, len(ACTIONS)), float(res.fun)


@dataclass
class CgResult:
    values: ValueFunction
    policy: Policy
    objective: float
    iterations: int
    columns: list
    history: list


LP_MASTER_LIMIT = 2000


def column_generation(mdp: GroupMdp, gamma, discount: float, tol: float = DEFAULT_TOL,
                      columns_per_round: int = COLUMNS_PER_ROUND, max_iter: int = 10000,
                      initial_columns=None, master: str = "auto") -> CgResult:
    """Solve the group's LP by column generation.

    ``iterations`` counts pricing rounds. The master starts from
    ``initial_columns`` or else one (blood, none) column per state. ``master``
    picks the restricted-master solver: "lp" (HiGHS, warm-started between
    rounds), "structured" (:class:`StructuredMaster`), or "auto", which uses
    the LP up to ``LP_MASTER_LIMIT`` states.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if master == "auto":
        master = "lp" if mdp.n_states <= LP_MASTER_LIMIT else "structured"
    if master not in ("lp", "structured"):
        raise ValueError(f"unknown master solver {master!r}")
    if initial_columns is None:
        seed_action = ACTIONS.index(Action(Test.BLOOD, Test.NONE))
        columns = [Column(mdp, s, seed_action) for s in range(mdp.n_states)]
    else:
        columns = [Column(mdp, c.index, c.action_index) for c in initial_columns]
    present = {c.key for c in columns}
    rmp = (MasterLp if master == "lp" else StructuredMaster)(mdp, gamma, discount)
    rmp.add(columns)
    history = []
    rounds = 0
    while True:
        duals, objective = rmp.solve()
        history.append(objective)
        rounds += 1
        q = mdp.q_values(duals, discount)
        f = (q - duals[:, None]).ravel()
        if math.isinf(tol) or f.min() >= -tol:
            break
        if rounds >= max_iter:
            raise ColumnGenerationError(
                f"column generation for group {mdp.group} hit {max_iter} rounds; "
                f"best master objective {objective:.6g}, min reduced cost {f.min():.3e}",
                objective)
        fresh = []
        for k in np.argsort(f, kind="stable"):
            if f[k] >= -tol or len(fresh) >= columns_per_round:
                break
            key = divmod(int(k), len(ACTIONS))
            if key not in present:
                present.add(key)
                fresh.append(Column(mdp, *key))
        if not fresh:
            break
        rmp.add(fresh)
        columns.extend(fresh)
    return CgResult(values=ValueFunction(mdp.group, mdp.shape, duals),
                    policy=Policy(mdp.group, mdp.shape, greedy(q, tol if math.isfinite(tol) else 0.0)),
                    objective=objective, iterations=rounds, columns=columns, history=history)


# ---------------------------------------------------------------------------
# whole-system driver

@dataclass
class GroupSolution:
    group: GroupId
    values: ValueFunction
    policy: Policy
    objective: float
    iterations: int
    columns: int
    wall_time: float
    method: str
    exact_gap: float | None = None
    policy_mismatches: int | None = None


def solve_system(sys: SystemParams, clinic: ClinicModel, method: str = "cg",
                 tol: float = DEFAULT_TOL, verify_exact: bool = False,
                 columns_per_round: int = COLUMNS_PER_ROUND,
                 groups=None) -> dict[GroupId, GroupSolution]:
    """Solve every group independently; ``method`` is "cg" or "exact"."""
    if method not in ("cg", "exact"):
        raise ValueError(f"unknown method {method!r}")
    out = {}
    for g in (groups or sys.group_ids):
        mdp = build_group_mdp(sys, g, clinic)
        gamma = initial_distribution(mdp, initial_state(sys, g))
        t0 = time.perf_counter()
        if method == "cg":
            r = column_generation(mdp, gamma, sys.discount, tol, columns_per_round)
            sol = GroupSolution(g, r.values, r.policy, r.objective, r.iterations,
                                len(r.columns), 0.0, "cg")
        else:
            V, pi = value_iteration(mdp, sys.discount, tol)
            sol = GroupSolution(g, V, pi, float(gamma @ V.values), 0, 0, 0.0, "exact")
        sol.wall_time = time.perf_counter() - t0
        if verify_exact and method == "cg":
            V, pi = value_iteration(mdp, sys.discount, tol)
            exact = float(gamma @ V.values)
            sol.exact_gap = abs(sol.objective - exact) / max(abs(exact), 1.0)
            q = mdp.q_values(V.values, sys.discount)
            sol.policy_mismatches = int(_nontie_mismatches(q, sol.policy.actions, pi.actions, 10 * tol))
        out[g] = sol
    return out


def _nontie_mismatches(q: np.ndarray, a1: np.ndarray, a2: np.ndarray, gap: float) -> int:
    """States whose chosen actions differ although the best action wins by more than ``gap``."""
    srt = np.sort(q, axis=1)
    clear = (srt[:, 1] - srt[:, 0]) > gap
    return int(np.count_nonzero(clear & (a1 != a2)))


def solver_report_csv(solutions: dict[GroupId, GroupSolution], timing: bool = False) -> str:
    """Per-group summary. Wall time is left out unless ``timing`` so output is reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["group", "method", "objective", "iterations", "columns", "exact_rel_gap",
            "policy_mismatches"]
    w.writerow(head + (["wall_time_s"] if timing else []))
    for g in sorted(solutions):
        s = solutions[g]
        row = [str(g), s.method, f"{s.objective:.6f}", s.iterations, s.columns,
               "" if s.exact_gap is None else f"{s.exact_gap:.3e}",
               "" if s.policy_mismatches is None else s.policy_mismatches]
        w.writerow(row + ([f"{s.wall_time:.3f}"] if timing else []))
    return buf.getvalue()
