"""Domain types, configuration loading and the built-in parameter set.

Everything downstream (transition tables, costs, simulation) reads its numbers
from a :class:`SystemParams`, which is immutable once loaded.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping, NamedTuple

from scipy import stats

__all__ = [
    "ACTIONS",
    "Action",
    "ClinicParams",
    "ConfigError",
    "GroupId",
    "GroupParams",
    "GroupState",
    "InitialMode",
    "SystemParams",
    "Test",
    "default_bounds",
    "desk_bounds",
    "dump_config",
    "initial_state",
    "load_config",
    "paper_defaults",
    "scaled_system",
]


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration documents.

    ``problems`` lists every violated constraint, not just the first.
    """

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class Test(enum.Enum):
    NONE = "none"
    SKIN = "skin"
    BLOOD = "blood"


Test.__test__ = False          # not a pytest test class


class GroupId(NamedTuple):
    salary: int
    risk: int

    def __str__(self) -> str:
        return f"{self.salary},{self.risk}"

    @classmethod
    def parse(cls, text: str) -> "GroupId":
        try:
            i, j = (int(part) for part in str(text).split(","))
        except ValueError:
            raise ConfigError(f"group key {text!r} is not of the form 'i,j'") from None
        return cls(i, j)


class GroupState(NamedTuple):
    new_arrivals: int
    ongoing: int
    undetected: int


@dataclass(frozen=True)
class Action:
    new_test: Test
    ongoing_test: Test

    def __post_init__(self):
        if self.new_test not in (Test.SKIN, Test.BLOOD):
            raise ValueError("new hires must take a skin or a blood test")

    @property
    def code(self) -> int:
        """Region-map code of the ongoing decision: 1 none, 2 skin, 3 blood."""
        return {Test.NONE: 1, Test.SKIN: 2, Test.BLOOD: 3}[self.ongoing_test]

    def __str__(self) -> str:
        return f"{self.new_test.value}/{self.ongoing_test.value}"


# Order doubles as the tie-breaking preference: ongoing none > skin > blood,
# then new skin > blood.
ACTIONS: tuple[Action, ...] = tuple(
    Action(new, ongoing)
    for ongoing in (Test.NONE, Test.SKIN, Test.BLOOD)
    for new in (Test.SKIN, Test.BLOOD)
)


class InitialMode(enum.Enum):
    CONFIGURED = "configured"
    STEADY_STATE = "steady"


@dataclass(frozen=True)
class GroupParams:
    arrival_rate: float
    leave_prob: float
    patient_contact_prob: float
    transmission_prob: float
    skin_fp: float
    skin_fn: float
    blood_fp: float
    blood_fn: float
    undetected_cost: float
    lost_time_rate: float
    max_new: int
    max_ongoing: int
    max_undetected: int

    def violations(self, where: str = "") -> list[str]:
        out = []
        prefix = f"{where}: " if where else ""
        for name in ("leave_prob", "patient_contact_prob", "transmission_prob",
                     "skin_fp", "skin_fn", "blood_fp", "blood_fn"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                out.append(f"{prefix}{_KEY_FOR_FIELD[name]} = {v} is not a probability in [0, 1]")
        if not self.arrival_rate > 0:
            out.append(f"{prefix}lambda = {self.arrival_rate} must be > 0")
        for name in ("undetected_cost", "lost_time_rate"):
            if getattr(self, name) < 0:
                out.append(f"{prefix}{_KEY_FOR_FIELD[name]} must be >= 0")
        for name in ("max_new", "max_ongoing", "max_undetected"):
            if getattr(self, name) < 0:
                out.append(f"{prefix}{name} must be >= 0")
        if self.max_undetected > self.max_new + self.max_ongoing:
            out.append(f"{prefix}max_undetected exceeds max_new + max_ongoing")
        return out

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.max_new + 1, self.max_ongoing + 1, self.max_undetected + 1)


@dataclass(frozen=True)
class ClinicParams:
    """Clinic service times (hours) and the queue used for the waiting bound.

    ``season_hours`` is the length of the testing season over which visits
    arrive in the pre-processing queue simulation.
    """

    t_blood: float = 0.5
    t_skin_visit: float = 0.5
    t_xray: float = 1.0
    p_missed_window: float = 0.1
    servers: int = 2
    service_rate: float = 6.0
    season_hours: float = 2000.0
    geometric_restart: bool = False

    def violations(self) -> list[str]:
        out = []
        for name in ("t_blood", "t_skin_visit", "t_xray"):
            if getattr(self, name) < 0:
                out.append(f"clinic.{name} must be >= 0")
        if not (0.0 <= self.p_missed_window <= 1.0):
            out.append("clinic.p_missed_window is not a probability in [0, 1]")
        if self.geometric_restart and self.p_missed_window >= 1.0:
            out.append("clinic.p_missed_window must be < 1 with geometric_restart")
        if self.servers < 1:
            out.append("clinic.servers must be >= 1")
        if not self.service_rate > 0:
            out.append("clinic.service_rate must be > 0")
        if not self.season_hours > 0:
            out.append("clinic.season_hours must be > 0")
        return out


@dataclass(frozen=True)
class SystemParams:
    groups: Mapping[GroupId, GroupParams]
    beta: float
    test_cost_blood: float
    test_cost_skin: float
    xray_cost: float
    discount: float = 0.97
    clinic: ClinicParams = field(default_factory=ClinicParams)
    initial_state_mode: InitialMode = InitialMode.STEADY_STATE
    initial: Mapping[GroupId, GroupState] = field(default_factory=dict)
    double_charge_new_skin: bool = False
    # Off-diagonal entries must be 0 for the per-group decomposition; only
    # the diagonal is stored.
    contact_diagonal: Mapping[GroupId, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "groups", dict(sorted(self.groups.items())))

    @property
    def group_ids(self) -> list[GroupId]:
        return list(self.groups)

    def contact(self, g: GroupId, h: GroupId) -> float:
        if g != h:
            return 0.0
        return self.contact_diagonal.get(g, 1.0)

    def violations(self) -> list[str]:
        out = []
        if not self.groups:
            out.append("at least one group required")
        for g, gp in self.groups.items():
            if g.salary < 1 or g.risk < 1:
                out.append(f"group {g}: indices must be >= 1")
            out.extend(gp.violations(f"group {g}"))
        if not (0.0 <= self.beta <= 1.0):
            out.append(f"beta = {self.beta} is not a proportion in [0, 1]")
        if not (0.0 <= self.discount < 1.0):
            out.append(f"discount = {self.discount} must lie in [0, 1)")
        for name, v in (("costs.blood", self.test_cost_blood),
                        ("costs.skin", self.test_cost_skin),
                        ("costs.xray", self.xray_cost)):
            if v < 0:
                out.append(f"{name} must be >= 0")
        for g, rho in self.contact_diagonal.items():
            if rho != 1.0:
                out.append(f"contact {g},{g}: diagonal contact probability must be 1")
        out.extend(self.clinic.violations())
        for g, s in self.initial.items():
            if g not in self.groups:
                out.append(f"initial state given for unknown group {g}")
                continue
            gp = self.groups[g]
            if not (0 <= s.new_arrivals <= gp.max_new and 0 <= s.ongoing <= gp.max_ongoing
                    and 0 <= s.undetected <= gp.max_undetected):
                out.append(f"initial state {tuple(s)} for group {g} is outside the bounds")
        if self.initial_state_mode is InitialMode.CONFIGURED:
            missing = [str(g) for g in self.groups if g not in self.initial]
            if missing:
                out.append("configured initial mode needs a triple for groups " + ", ".join(missing))
        return out

    def validate(self) -> "SystemParams":
        problems = self.violations()
        if problems:
            raise ConfigError(problems)
        return self


# ---------------------------------------------------------------------------
# bounds

def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def poisson_bound(rate: float, tail: float = 1e-3) -> int:
    """Smallest k with P(Poisson(rate) > k) < tail."""
    k = int(stats.poisson.ppf(1.0 - tail, rate))
    while stats.poisson.sf(k, rate) >= tail:
        k += 1
    while k > 0 and stats.poisson.sf(k - 1, rate) < tail:
        k -= 1
    return k


def default_bounds(rate: float, leave_prob: float) -> tuple[int, int, int]:
    steady = _round_half_up(rate / leave_prob) if leave_prob > 0 else _round_half_up(rate)
    m_y = 4 * steady
    m_u = max(5, _round_half_up(0.2 * m_y))
    return poisson_bound(rate), m_y, m_u


def desk_bounds(rate: float, leave_prob: float) -> tuple[int, int, int]:
    """Tighter bounds for the exact solver: 1.5x the steady headcount."""
    steady = _round_half_up(rate / leave_prob) if leave_prob > 0 else _round_half_up(rate)
    m_y = max(8, _round_half_up(1.5 * steady))
    m_u = max(4, _round_half_up(0.1 * m_y))
    return poisson_bound(rate), m_y, m_u


def scaled_system(sys: SystemParams, factor: float, bounds=desk_bounds) -> SystemParams:
    """Scale every arrival rate by ``factor`` and recompute bounds with ``bounds``."""
    groups = {}
    for g, gp in sys.groups.items():
        rate = gp.arrival_rate * factor
        mx, my, mu = bounds(rate, gp.leave_prob)
        groups[g] = replace(gp, arrival_rate=rate, max_new=mx, max_ongoing=my, max_undetected=mu)
    return replace(sys, groups=groups, initial={},
                   initial_state_mode=InitialMode.STEADY_STATE).validate()


def initial_state(params: SystemParams, group: GroupId) -> GroupState:
    gp = params.groups[group]
    if params.initial_state_mode is InitialMode.CONFIGURED or group in params.initial:
        try:
            s = params.initial[group]
        except KeyError:
            raise ConfigError(f"no configured initial state for group {group}") from None
        if not (0 <= s.new_arrivals <= gp.max_new and 0 <= s.ongoing <= gp.max_ongoing
                and 0 <= s.undetected <= gp.max_undetected):
            raise ConfigError(f"initial state {tuple(s)} for group {group} is outside the bounds")
        return GroupState(*s)
    x0 = min(_round_half_up(gp.arrival_rate), gp.max_new)
    y0 = _round_half_up(gp.arrival_rate / gp.leave_prob) if gp.leave_prob > 0 else gp.max_ongoing
    return GroupState(x0, min(y0, gp.max_ongoing), 0)


# ---------------------------------------------------------------------------
# paper parameter set

SALARY_LABELS = {1: "physicians", 2: "nurses", 3: "other employees"}
RISK_LABELS = {1: "BCG vaccinated", 2: "high risk locations", 3: "low risk locations"}

_ARRIVALS = {(1, 1): 4, (1, 2): 14, (1, 3): 10, (2, 1): 15, (2, 2): 50,
             (2, 3): 35, (3, 1): 4, (3, 2): 14, (3, 3): 10}
_CONTACT = {(3, 1): 0.75, (3, 2): 0.5}
_TRANSMISSION = {1: 0.05, 2: 0.22, 3: 0.22}           # by risk group
_SKIN_FP = {1: 0.6, 2: 0.27, 3: 0.27}
_LOST_TIME = {1: 150.0, 2: 30.0, 3: 29.0}             # by salary group
_UNDETECTED = {1: 5000.0, 2: 1000.0, 3: 1000.0}


def paper_defaults() -> SystemParams:
    groups = {}
    for (i, j), rate in _ARRIVALS.items():
        mx, my, mu = default_bounds(rate, 0.15)
        groups[GroupId(i, j)] = GroupParams(
            arrival_rate=float(rate),
            leave_prob=0.15,
            patient_contact_prob=_CONTACT.get((i, j), 1.0),
            transmission_prob=_TRANSMISSION[j],
            skin_fp=_SKIN_FP[j],
            skin_fn=0.04,
            blood_fp=0.176,
            blood_fn=0.008,
            undetected_cost=_UNDETECTED[i],
            lost_time_rate=_LOST_TIME[i],
            max_new=mx,
            max_ongoing=my,
            max_undetected=mu,
        )
    return SystemParams(groups=groups, beta=0.1, test_cost_blood=45.0,
                        test_cost_skin=8.0, xray_cost=100.0).validate()


# ---------------------------------------------------------------------------
# configuration documents

_KEY_FOR_FIELD = {
    "arrival_rate": "lambda",
    "leave_prob": "p_leave",
    "patient_contact_prob": "nu",
    "transmission_prob": "xi",
    "skin_fp": "skin_fp",
    "skin_fn": "skin_fn",
    "blood_fp": "blood_fp",
    "blood_fn": "blood_fn",
    "undetected_cost": "c_undetected",
    "lost_time_rate": "c_lost_per_hour",
    "max_new": "max_new",
    "max_ongoing": "max_ongoing",
    "max_undetected": "max_undetected",
}
_FIELD_FOR_KEY = {v: k for k, v in _KEY_FOR_FIELD.items()}
_BOUND_KEYS = ("max_new", "max_ongoing", "max_undetected")
_SALARY_KEYS = ("c_undetected", "c_lost_per_hour")
_CLINIC_KEYS = {f.name for f in fields(ClinicParams)}


def _number(value: Any, where: str, problems: list[str], integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{where}: expected a number, got {value!r}")
        return None
    if integer and (not float(value).is_integer()):
        problems.append(f"{where}: expected an integer, got {value!r}")
        return None
    return int(value) if integer else float(value)


def load_config(text: str) -> SystemParams:
    """Parse and validate a JSON configuration document.

    Per-group values may be given under ``groups`` (``"i,j" -> {...}``) or as
    top-level tables keyed by group (``"lambda": {"2,2": 50}``); the salary
    indexed costs also accept plain ``"i"`` keys. Missing bounds are filled
    with :func:`default_bounds`.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("top level of the configuration must be an object")

    problems: list[str] = []
    raw: dict[GroupId, dict[str, Any]] = {}
    groups_doc = doc.get("groups", {})
    if not isinstance(groups_doc, dict):
        raise ConfigError("groups: expected an object mapping 'i,j' to parameters")
    for key, entry in groups_doc.items():
        g = GroupId.parse(key)
        if not isinstance(entry, dict):
            problems.append(f"groups.{key}: expected an object")
            continue
        for k in entry:
            if k not in _FIELD_FOR_KEY:
                problems.append(f"groups.{key}: unknown field {k!r}")
        raw[g] = {k: v for k, v in entry.items() if k in _FIELD_FOR_KEY}

    # columnar tables such as "lambda": {"2,2": 50}
    for key in _FIELD_FOR_KEY:
        table = doc.get(key)
        if table is None:
            continue
        if not isinstance(table, dict):
            problems.append(f"{key}: expected an object keyed by group")
            continue
        for gk, v in table.items():
            if "," in str(gk):
                raw.setdefault(GroupId.parse(gk), {})[key] = v
            elif key in _SALARY_KEYS:
                try:
                    salary = int(gk)
                except ValueError:
                    problems.append(f"{key}: bad salary key {gk!r}")
                    continue
                targets = [g for g in raw if g.salary == salary]
                if not targets:
                    problems.append(f"{key}: salary group {salary} has no groups")
                for g in targets:
                    raw[g].setdefault(key, v)
            else:
                problems.append(f"{key}: key {gk!r} is not of the form 'i,j'")

    groups: dict[GroupId, GroupParams] = {}
    for g, entry in raw.items():
        where = f"groups.{g}"
        values: dict[str, Any] = {}
        for key, name in _FIELD_FOR_KEY.items():
            if key in _BOUND_KEYS:
                continue
            if key not in entry:
                problems.append(f"{where}: missing required field {key!r}")
                continue
            values[name] = _number(entry[key], f"{where}.{key}", problems)
        if any(v is None for v in values.values()) or len(values) < len(_FIELD_FOR_KEY) - 3:
            continue
        rate, leave = values["arrival_rate"], values["leave_prob"]
        if rate > 0 and 0 < leave <= 1:
            defaults = dict(zip(_BOUND_KEYS, default_bounds(rate, leave)))
        else:
            defaults = dict.fromkeys(_BOUND_KEYS, 0)
        for key in _BOUND_KEYS:
            if key in entry:
                values[key] = _number(entry[key], f"{where}.{key}", problems, integer=True)
            else:
                values[key] = defaults[key]
        if any(v is None for v in values.values()):
            continue
        groups[g] = GroupParams(**values)

    top: dict[str, Any] = {}
    if "beta" not in doc:
        problems.append("missing required field 'beta'")
    else:
        top["beta"] = _number(doc["beta"], "beta", problems)
    costs = doc.get("costs")
    if not isinstance(costs, dict):
        problems.append("missing required object 'costs' {blood, skin, xray}")
    else:
        for key, name in (("blood", "test_cost_blood"), ("skin", "test_cost_skin"),
                          ("xray", "xray_cost")):
            if key not in costs:
                problems.append(f"costs: missing required field {key!r}")
            else:
                top[name] = _number(costs[key], f"costs.{key}", problems)
    if "discount" in doc:
        top["discount"] = _number(doc["discount"], "discount", problems)
    if "double_charge_new_skin" in doc:
        top["double_charge_new_skin"] = bool(doc["double_charge_new_skin"])

    clinic_doc = doc.get("clinic", {})
    clinic_kwargs = {}
    if not isinstance(clinic_doc, dict):
        problems.append("clinic: expected an object")
    else:
        for k, v in clinic_doc.items():
            if k not in _CLINIC_KEYS:
                problems.append(f"clinic: unknown field {k!r}")
            elif k == "geometric_restart":
                clinic_kwargs[k] = bool(v)
            else:
                clinic_kwargs[k] = _number(v, f"clinic.{k}", problems, integer=(k == "servers"))

    initial = {}
    init_doc = doc.get("initial", {})
    if not isinstance(init_doc, dict):
        problems.append("initial: expected an object mapping 'i,j' to [x, y, u]")
    else:
        for gk, triple in init_doc.items():
            if not (isinstance(triple, list) and len(triple) == 3):
                problems.append(f"initial.{gk}: expected a triple [x, y, u]")
                continue
            vals = [_number(v, f"initial.{gk}", problems, integer=True) for v in triple]
            if None not in vals:
                initial[GroupId.parse(gk)] = GroupState(*vals)
    mode = doc.get("initial_mode")
    if mode is None:
        top["initial_state_mode"] = (InitialMode.CONFIGURED if initial and len(initial) == len(groups)
                                     else InitialMode.STEADY_STATE)
    else:
        try:
            top["initial_state_mode"] = InitialMode(mode)
        except ValueError:
            problems.append(f"initial_mode: expected 'steady' or 'configured', got {mode!r}")

    contact = {}
    contact_doc = doc.get("contact", {})
    if isinstance(contact_doc, dict):
        for pair, v in contact_doc.items():
            try:
                a, b = str(pair).split(";")
            except ValueError:
                problems.append(f"contact: key {pair!r} is not of the form 'i,j;k,l'")
                continue
            ga, gb = GroupId.parse(a), GroupId.parse(b)
            v = _number(v, f"contact.{pair}", problems)
            if v is None:
                continue
            if ga != gb and v != 0.0:
                problems.append(f"contact {pair}: cross-group contact must be 0")
            elif ga == gb:
                contact[ga] = v
    else:
        problems.append("contact: expected an object")

    if problems:
        raise ConfigError(problems)
    if None in top.values() or None in clinic_kwargs.values():
        raise ConfigError(problems or ["invalid values"])
    params = SystemParams(groups=groups, clinic=ClinicParams(**clinic_kwargs),
                          initial=initial, contact_diagonal=contact, **top)
    return params.validate()


def config_dict(params: SystemParams) -> dict:
    groups = {}
    for g, gp in params.groups.items():
        groups[str(g)] = {key: getattr(gp, name) for name, key in _KEY_FOR_FIELD.items()}
    doc = {
        "groups": groups,
        "beta": params.beta,
        "costs": {"blood": params.test_cost_blood, "skin": params.test_cost_skin,
                  "xray": params.xray_cost},
        "discount": params.discount,
        "clinic": {f.name: getattr(params.clinic, f.name) for f in fields(ClinicParams)},
        "initial_mode": params.initial_state_mode.value,
        "initial": {str(g): list(s) for g, s in sorted(params.initial.items())},
        "double_charge_new_skin": params.double_charge_new_skin,
    }
    if params.contact_diagonal:
        doc["contact"] = {f"{g};{g}": v for g, v in sorted(params.contact_diagonal.items())}
    return doc


def dump_config(params: SystemParams) -> str:
    """Serialize to the canonical JSON document accepted by :func:`load_config`."""
    return json.dumps(config_dict(params), indent=2, sort_keys=True)
