"""Employee time at the testing clinic.

Per-employee hours combine the service protocol of each test (one blood draw,
two skin visits, four for a new hire's two-step test plus restarts, X-ray on a
positive result) with an upper bound on queueing delay. The bound comes from a
one-season queue simulation in which every group is at its maximum size and
everybody takes the skin test.
"""
from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field

import numpy as np

from .model import ClinicParams, GroupId, SystemParams, Test
from .seeding import substream

__all__ = [
    "ClinicModel",
    "ClinicParams",
    "build_clinic_model",
    "expected_time_per_employee",
    "waiting_upper_bound",
]

_NEW_SKIN_VISITS = 4
_ONGOING_SKIN_VISITS = 2
_STREAM_TAG = 1


def expected_time_per_employee(test: Test, is_new: bool, p_positive: float,
                               cp: ClinicParams) -> float:
    """Expected clinic hours for one employee, excluding queueing delay."""
    if test is Test.BLOOD:
        base = cp.t_blood
    elif test is Test.SKIN:
        if is_new:
            restarts = (cp.p_missed_window / (1.0 - cp.p_missed_window) if cp.geometric_restart
                        else cp.p_missed_window)
            base = _NEW_SKIN_VISITS * cp.t_skin_visit + restarts * 2 * cp.t_skin_visit
        else:
            base = _ONGOING_SKIN_VISITS * cp.t_skin_visit
    else:
        raise ValueError(f"no clinic time for test {test}")
    return base + p_positive * cp.t_xray


def _fifo_waits(arrivals: np.ndarray, services: np.ndarray, servers: int) -> np.ndarray:
    order = np.argsort(arrivals, kind="stable")
    waits = np.empty_like(arrivals)
    free = [0.0] * servers
    for k in order:
        t = arrivals[k]
        start = max(t, free[0])
        waits[k] = start - t
        heapq.heapreplace(free, start + services[k])
    return waits


def waiting_upper_bound(group: GroupId, sys: SystemParams, cp: ClinicParams | None = None,
                        seed: int = 0) -> float:
    """Mean total queueing delay (hours) per employee of ``group`` in one season.

    Every group, this one included, is at its maximum headcount and takes the
    skin test. Visit times are uniform over the season and service is
    exponential at ``cp.service_rate`` per server-hour, first come first
    served on ``cp.servers`` servers. Each (group, cohort) draws from its own
    substream so that enlarging other groups only adds customers.
    """
    cp = cp or sys.clinic
    arrivals, services, owner = [], [], []
    for g, gp in sys.groups.items():
        for cohort, count, visits in ((0, gp.max_new, _NEW_SKIN_VISITS),
                                      (1, gp.max_ongoing, _ONGOING_SKIN_VISITS)):
            n = count * visits
            if n == 0:
                continue
            rng_a = substream(seed, _STREAM_TAG, g.salary, g.risk, cohort, 0)
            rng_s = substream(seed, _STREAM_TAG, g.salary, g.risk, cohort, 1)
            arrivals.append(rng_a.uniform(0.0, cp.season_hours, size=n))
            services.append(rng_s.exponential(1.0 / cp.service_rate, size=n))
            if g == group:
                owner.append(np.full(n, True))
            else:
                owner.append(np.full(n, False))
    if not arrivals:
        return 0.0
    a = np.concatenate(arrivals)
    s = np.concatenate(services)
    mine = np.concatenate(owner)
    gp = sys.groups[group]
    employees = gp.max_new + gp.max_ongoing
    if employees == 0:
        return 0.0
    waits = _fifo_waits(a, s, cp.servers)
    return float(waits[mine].sum() / employees)


@dataclass(frozen=True)
class ClinicModel:
    """Per-employee clinic hours by (group, test, is_new), waiting included.

    ``hours`` excludes the X-ray follow-up, which is charged per positive
    result at ``xray_hours``.
    """

    hours: dict = field(default_factory=dict)
    waiting: dict = field(default_factory=dict)
    xray_hours: float = 0.0

    def per_employee(self, group: GroupId, test: Test, is_new: bool,
                     p_positive: float = 0.0) -> float:
        return self.hours[(group, test, is_new)] + p_positive * self.xray_hours

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "test", "is_new", "hours"])
        for (g, test, is_new), h in sorted(self.hours.items(),
                                           key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])):
            w.writerow([str(g), test.value, int(is_new), repr(round(h, 12))])
        for g in sorted(self.waiting):
            w.writerow([str(g), "xray", "", repr(round(self.xray_hours, 12))])
        return buf.getvalue()


def build_clinic_model(sys: SystemParams, cp: ClinicParams | None = None, seed: int = 0,
                       include_waiting: bool = True) -> ClinicModel:
    cp = cp or sys.clinic
    hours, waiting = {}, {}
    for g in sys.groups:
        wait = waiting_upper_bound(g, sys, cp, seed) if include_waiting else 0.0
        waiting[g] = wait
        for test in (Test.SKIN, Test.BLOOD):
            for is_new in (True, False):
                hours[(g, test, is_new)] = expected_time_per_employee(test, is_new, 0.0, cp) + wait
    return ClinicModel(hours=hours, waiting=waiting, xray_hours=cp.t_xray)


def zero_clinic(sys: SystemParams) -> ClinicModel:
    """Clinic model with no lost time at all."""
    hours = {(g, t, n): 0.0 for g in sys.groups for t in (Test.SKIN, Test.BLOOD)
             for n in (True, False)}
    return ClinicModel(hours=hours, waiting=dict.fromkeys(sys.groups, 0.0), xray_hours=0.0)
