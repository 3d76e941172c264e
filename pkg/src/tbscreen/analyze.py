"""Practitioner summaries of solved policies.

Testing frequencies come from simulating a policy and counting ongoing-test
years; trigger thresholds and region maps are read directly off a policy
table. All outputs are plain CSV or text.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .clinic import ClinicModel
from .model import GroupId, SystemParams, Test
from .sim import BURN_IN, PolicySpec, ThresholdRule, run_years
from .solve import Policy

__all__ = [
    "FrequencyEstimate",
    "RegionMap",
    "ThresholdResult",
    "decision_agreement",
    "estimate_frequencies",
    "export_region_map",
    "extract_thresholds",
    "frequencies_csv",
    "frequencies_text",
    "default_fixed_x",
]

INFREQUENT = "infrequent"
_CODE_TEST = {1: Test.NONE, 2: Test.SKIN, 3: Test.BLOOD}


@dataclass(frozen=True)
class RegionMap:
    """Ongoing-test codes (1 none, 2 skin, 3 blood) over the (y, u) grid at fixed x."""

    group: GroupId
    fixed_x: int
    grid: np.ndarray

    def codes(self) -> set[int]:
        return {int(c) for c in np.unique(self.grid)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "u", "action"])
        ny, nu = self.grid.shape
        for y in range(ny):
            for u in range(nu):
                w.writerow([y, u, int(self.grid[y, u])])
        return buf.getvalue()


def export_region_map(policy: Policy, group: GroupId, fixed_x: int) -> RegionMap:
    mx = policy.shape[0]
    if not 0 <= fixed_x < mx:
        raise ValueError(f"fixed_x must lie in [0, {mx - 1}]")
    if policy.group != group:
        raise ValueError(f"policy is for group {policy.group}, not {group}")
    return RegionMap(group, int(fixed_x), policy.ongoing_codes()[fixed_x].copy())


def default_fixed_x(sys: SystemParams, group: GroupId, policy: Policy | None = None) -> int:
    """round(lambda), clamped to the policy grid when one is given."""
    x = int(np.floor(sys.groups[group].arrival_rate + 0.5))
    if policy is not None:
        x = min(x, policy.shape[0] - 1)
    return x


# ---------------------------------------------------------------------------
# thresholds

@dataclass(frozen=True)
class ThresholdResult:
    group: GroupId
    fixed_x: int
    bands: tuple[tuple[float, Test], ...]
    diagnostic: str = ""

    def to_rule(self, period_years: int = 1, new_test: Test = Test.BLOOD) -> ThresholdRule:
        return ThresholdRule(self.group, self.bands, period_years=period_years, new_test=new_test)


def extract_thresholds(policy: Policy, group: GroupId, fixed_x: int) -> ThresholdResult:
    """Undetected-share triggers of the ongoing test, read off the policy at ``fixed_x``.

    For each y the first u at which skin (and, separately, blood) is chosen
    gives a boundary share u / (x + y); the median over y is the band's
    threshold. Boundaries above a share of 1 are ignored: u counts people
    who already left the tested headcount, so such states exist, but they
    give no usable percentage trigger. A band whose threshold is not below
    the next band's would never be used and is dropped.
    """
    grid = export_region_map(policy, group, fixed_x).grid
    ny, nu = grid.shape
    bounds: dict[int, list[float]] = {2: [], 3: []}
    beyond = False
    for y in range(ny):
        n = fixed_x + y
        if n == 0:
            continue
        row = grid[y]
        for code in (2, 3):
            hit = np.flatnonzero(row == code)
            if hit.size:
                if hit[0] <= n:
                    bounds[code].append(hit[0] / n)
                else:
                    beyond = True
    found = sorted((float(np.median(v)), _CODE_TEST[c]) for c, v in bounds.items() if v)
    if not found:
        why = ("tests start only above an undetected share of 100%" if beyond
               else "ongoing employees are never tested")
        return ThresholdResult(group, fixed_x, (), f"{why} at x = {fixed_x}")
    bands = []
    for thr, test in found:
        if bands and bands[-1][1] is Test.BLOOD:
            break                          # skin above blood is never reached
        bands.append((thr, test))
    return ThresholdResult(group, fixed_x, tuple(bands))


# ---------------------------------------------------------------------------
# frequencies

@dataclass(frozen=True)
class FrequencyEstimate:
    group: GroupId
    test: Test
    period_years: int | str
    count: float                   # mean ongoing-test years per horizon
    new_test: Test
    trigger_threshold: float | None = None
    bands: tuple = ()

    @property
    def infrequent(self) -> bool:
        return self.period_years == INFREQUENT

    def describe(self) -> str:
        if not self.infrequent:
            return f"{self.test.value} every {self.period_years} year" + (
                "" if self.period_years == 1 else "s")
        if not self.bands:
            return "infrequent, no trigger"
        parts = [f"{t.value} when undetected share >= {100 * th:.1f}%" for th, t in self.bands]
        return "infrequent; " + ", ".join(parts)


def _as_spec(policy, scale: float) -> PolicySpec:
    if isinstance(policy, PolicySpec):
        return policy
    return PolicySpec.optimal(policy, scale=scale)


def estimate_frequencies(policy, sys: SystemParams, horizon: int = 100, seed: int = 0,
                         replications: int = 100, burn_in: int = BURN_IN, scale: float = 1.0,
                         clinic: ClinicModel | None = None) -> dict[GroupId, FrequencyEstimate]:
    """Ongoing-test period per group from simulating ``policy`` for ``horizon`` years.

    ``policy`` is a :class:`PolicySpec` or a dict of per-group tables (solved
    at ``scale`` relative to ``sys``). Counts are averaged over
    ``replications`` runs after ``burn_in`` warm-up years. A group with fewer
    than horizon/20 administrations is "infrequent" and, for table policies,
    gets its trigger thresholds attached.
    """
    if horizon < 10:
        raise ValueError("horizon must be at least 10 years")
    spec = _as_spec(policy, scale)
    groups = list(sys.group_ids)
    tests = {g: np.zeros(replications) for g in groups}
    blood = {g: 0.0 for g in groups}
    skin = {g: 0.0 for g in groups}
    new_blood = {g: 0.0 for g in groups}
    for t, g, _, a, _ in run_years(spec, sys, horizon + burn_in, replications, seed, clinic):
        if t < burn_in:
            continue
        ongoing = a // 2
        tests[g] += ongoing > 0
        blood[g] += float(np.count_nonzero(ongoing == 2))
        skin[g] += float(np.count_nonzero(ongoing == 1))
        new_blood[g] += float(np.count_nonzero(a % 2 == 1))
    out = {}
    for g in groups:
        count = float(tests[g].mean())
        test = Test.NONE if count == 0 else (Test.BLOOD if blood[g] >= skin[g] else Test.SKIN)
        new = Test.BLOOD if new_blood[g] >= 0.5 * horizon * replications else Test.SKIN
        if count < horizon / 20:
            bands = ()
            if spec.policies and g in spec.policies:
                pol = spec.policies[g]
                fx = min(int(np.floor(spec.scale * sys.groups[g].arrival_rate + 0.5)),
                         pol.shape[0] - 1)
                bands = extract_thresholds(pol, g, fx).bands
            elif spec.rules:
                bands = next((r.bands for r in spec.rules if r.group == g), ())
            out[g] = FrequencyEstimate(g, test, INFREQUENT, count, new,
                                       bands[0][0] if bands else None, tuple(bands))
        else:
            period = max(1, int(np.floor(horizon / count + 0.5)))
            out[g] = FrequencyEstimate(g, test, period, count, new)
    return out


def decision_agreement(source: PolicySpec, candidate: PolicySpec, sys: SystemParams,
                       years: int, replications: int, seed: int, groups=None) -> float:
    """Share of states visited under ``candidate`` where both policies pick the same
    ongoing test."""
    same = total = 0
    for t, g, (x, y, u), a, _ in run_years(candidate, sys, years, replications, seed,
                                           groups=groups):
        b = source.choose(g, t, x, y, u)
        same += int(np.count_nonzero(a // 2 == b // 2))
        total += a.size
    return same / total if total else 1.0


def frequencies_csv(estimates: dict[GroupId, FrequencyEstimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "new_test", "ongoing_test", "period_years", "tests_per_horizon",
                "trigger_threshold", "bands"])
    for g in sorted(estimates):
        e = estimates[g]
        w.writerow([str(g), e.new_test.value, e.test.value, e.period_years, f"{e.count:.2f}",
                    "" if e.trigger_threshold is None else f"{e.trigger_threshold:.4f}",
                    ";".join(f"{t.value}>={th:.4f}" for th, t in e.bands)])
    return buf.getvalue()


def frequencies_text(estimates: dict[GroupId, FrequencyEstimate]) -> str:
    lines = [f"{'group':<7s}{'new hires':<12s}ongoing employees"]
    for g in sorted(estimates):
        e = estimates[g]
        lines.append(f"{str(g):<7s}{e.new_test.value:<12s}{e.describe()}")
    return "\n".join(lines) + "\n"
