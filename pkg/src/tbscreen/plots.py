"""Figures for the CLI report path. Rendered off-screen to PNG files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402

from .analyze import RegionMap  # noqa: E402
from .model import RISK_LABELS, SALARY_LABELS  # noqa: E402
from .sim import Comparison  # noqa: E402

_COLORS = ["#f2f2f2", "#f4a259", "#5b8e7d"]      # none, skin, blood
_NAMES = ["no test", "skin test", "blood test"]
_META = {"Software": None}                          # keep PNG bytes run-independent


def region_map_figure(rm: RegionMap, path: str | Path) -> Path:
    """Heat map of the ongoing-test region over (y, u)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.imshow(rm.grid.T, origin="lower", aspect="auto", cmap=ListedColormap(_COLORS),
              vmin=0.5, vmax=3.5, interpolation="nearest")
    ax.set_xlabel("ongoing employees y")
    ax.set_ylabel("undetected infected u")
    s, r = rm.group
    ax.set_title(f"group {rm.group}: {SALARY_LABELS.get(s, s)}, {RISK_LABELS.get(r, r)}, "
                 f"x = {rm.fixed_x}", fontsize=9)
    present = sorted(rm.codes())
    ax.legend(handles=[Patch(color=_COLORS[c - 1], label=_NAMES[c - 1]) for c in present],
              loc="upper left", bbox_to_anchor=(1.01, 1.0), fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def comparison_figure(cmp: Comparison, path: str | Path) -> Path:
    """Yearly cost per policy with 95% intervals."""
    path = Path(path)
    names = [r.policy for r in cmp.reports]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    a1.bar(names, [r.avg_yearly_cost for r in cmp.reports],
           yerr=[r.cost_hw for r in cmp.reports], color="#5b8e7d", capsize=4)
    a1.set_ylabel("average yearly cost")
    a2.bar(names, [100 * r.avg_infection_rate for r in cmp.reports],
           yerr=[100 * r.rate_hw for r in cmp.reports], color="#f4a259", capsize=4)
    a2.set_ylabel("infection rate (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path
