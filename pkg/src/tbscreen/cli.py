"""Command-line entry point: ``tbscreen <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from pathlib import Path

from . import __version__
from .analyze import (default_fixed_x, estimate_frequencies, export_region_map,
                      extract_thresholds, frequencies_csv, frequencies_text)
from .clinic import build_clinic_model
from .mdp import build_group_mdp
from .model import (ACTIONS, ConfigError, GroupId, SystemParams, dump_config, load_config,
                    paper_defaults, scaled_system)
from .sim import PolicySpec, calibrate_beta, compare, simulate
from .solve import (ConvergenceError, ColumnGenerationError, LpError, solve_system,
                    solver_report_csv, value_iteration)

DESK_SCALE = 0.2
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Run:
    """Output directory bookkeeping plus the run manifest."""

    def __init__(self, args, base: SystemParams):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.base = base
        self.t0 = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        p = self.out / name
        p.write_text(text, encoding="utf-8", newline="")
        self.outputs.append(str(p))
        return p

    def track(self, path: Path) -> None:
        self.outputs.append(str(path))

    def manifest(self, argv: list[str]) -> Path:
        doc = {
            "command": self.args.command,
            "argv": argv,
            "config": self.args.config,
            "preset": self.args.preset,
            "seed": self.args.seed,
            "version": __version__,
            "param_hash": param_hash(self.base),
            "outputs": sorted(self.outputs),
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
        }
        p = self.out / f"manifest_{self.args.command}.json"
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p


def param_hash(params: SystemParams) -> str:
    return hashlib.sha256(dump_config(params).encode()).hexdigest()


def _load(args) -> SystemParams:
    if args.config is None:
        return paper_defaults()
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
    return load_config(text)


def _model_system(base: SystemParams, preset: str) -> SystemParams:
    return scaled_system(base, DESK_SCALE) if preset == "desk" else base


def _optimal_spec(base: SystemParams, preset: str, clinic, method: str = "exact") -> PolicySpec:
    """Solved per-group tables. Paper-scale runs use tables solved on the desk system."""
    solve_on = scaled_system(base, DESK_SCALE)
    scale = DESK_SCALE if preset == "paper" else 1.0
    if method == "cg":
        sols = solve_system(solve_on, clinic, method="cg", columns_per_round=10 ** 9)
        return PolicySpec.optimal({g: s.policy for g, s in sols.items()}, scale=scale)
    pols = {}
    for g in solve_on.group_ids:
        _, pi = value_iteration(build_group_mdp(solve_on, g, clinic), solve_on.discount)
        pols[g] = pi
    return PolicySpec.optimal(pols, scale=scale)


def _policy_csv(policy) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "u", "new_test", "ongoing_test", "code"])
    mx, my, mu = policy.shape
    grid = policy.index_grid()
    for x in range(mx):
        for y in range(my):
            for u in range(mu):
                a = ACTIONS[int(grid[x, y, u])]
                w.writerow([x, y, u, a.new_test.value, a.ongoing_test.value, a.code])
    return buf.getvalue()


def _tag(g: GroupId) -> str:
    return f"{g.salary}_{g.risk}"


# ---------------------------------------------------------------------------
# commands

def cmd_solve(args, run: _Run) -> int:
    system = _model_system(run.base, args.preset)
    clinic = build_clinic_model(run.base, seed=args.seed)
    k = args.columns_per_round if args.columns_per_round > 0 else 10 ** 9
    sols = solve_system(system, clinic, method=args.method, tol=args.tol,
                        verify_exact=args.verify_exact, columns_per_round=k)
    run.write("solver_report.csv", solver_report_csv(sols))
    run.write("clinic.csv", clinic.to_csv())
    for g, s in sorted(sols.items()):
        run.write(f"policy_{_tag(g)}.csv", _policy_csv(s.policy))
    lines = []
    for g, s in sorted(sols.items()):
        lines.append(f"group {g}: objective {s.objective:.2f}, {s.iterations} rounds, "
                     f"{s.columns} columns, {s.wall_time:.1f}s")
        if s.exact_gap is not None:
            lines.append(f"  exact check: relative gap {s.exact_gap:.2e}, "
                         f"{s.policy_mismatches} non-tie policy mismatches")
    run.write("solver_report.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    if args.verify_exact and any(s.exact_gap > 1e-4 or s.policy_mismatches for s in sols.values()):
        print("exact verification failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _spec_for(name: str, args, run: _Run, clinic) -> PolicySpec:
    if name == "current":
        return PolicySpec.annual_skin()
    if name == "threshold":
        return PolicySpec.threshold()
    return _optimal_spec(run.base, args.preset, clinic, args.method)


def cmd_simulate(args, run: _Run) -> int:
    system = _model_system(run.base, args.preset)
    clinic = build_clinic_model(run.base, seed=args.seed)
    spec = _spec_for(args.policy, args, run, clinic)
    rep = simulate(spec, system, args.years, args.reps, args.seed, clinic)
    run.write("simulation.csv", rep.to_csv())
    run.write("simulation.txt", rep.to_text())
    print(rep.to_text(), end="")
    return EXIT_OK


def cmd_compare(args, run: _Run) -> int:
    system = _model_system(run.base, args.preset)
    clinic = build_clinic_model(run.base, seed=args.seed)
    specs = [_spec_for(n, args, run, clinic) for n in ("current", "threshold", "optimal")]
    cmp = compare(specs, system, args.years, args.reps, args.seed, clinic)
    run.write("comparison.csv", cmp.to_csv())
    run.write("comparison.txt", cmp.to_text())
    if args.figures:
        from .plots import comparison_figure
        run.track(comparison_figure(cmp, run.out / "comparison.png"))
    print(cmp.to_text(), end="")
    return EXIT_OK


def cmd_calibrate(args, run: _Run) -> int:
    system = _model_system(run.base, args.preset)
    clinic = build_clinic_model(run.base, seed=args.seed)
    history: list = []
    beta = calibrate_beta(args.target, system, tol=args.tol, seed=args.seed, years=args.years,
                          replications=args.reps, metric=args.metric, clinic=clinic,
                          history=history)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", args.metric])
    for b, r in history:
        w.writerow([f"{b:.10f}", f"{r:.8f}"])
    run.write("calibration_steps.csv", buf.getvalue())
    run.write("calibration.csv", f"target,metric,beta\n{args.target},{args.metric},{beta:.10f}\n")
    print(f"beta = {beta:.6f} ({args.metric} target {args.target}, {len(history)} evaluations)")
    return EXIT_OK


def cmd_export_map(args, run: _Run) -> int:
    system = _model_system(run.base, args.preset)
    clinic = build_clinic_model(run.base, seed=args.seed)
    try:
        g = GroupId.parse(args.group)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if g not in system.groups:
        raise ConfigError(f"group {g} is not in the configuration")
    _, pi = value_iteration(build_group_mdp(system, g, clinic), system.discount)
    fx = default_fixed_x(system, g, pi) if args.fixed_x is None else args.fixed_x
    rm = export_region_map(pi, g, fx)
    run.write(f"region_map_{_tag(g)}.csv", rm.to_csv())
    th = extract_thresholds(pi, g, fx)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "fixed_x", "test", "threshold"])
    for thr, test in th.bands:
        w.writerow([str(g), fx, test.value, f"{thr:.6f}"])
    run.write(f"thresholds_{_tag(g)}.csv", buf.getvalue())
    if args.figures:
        from .plots import region_map_figure
        run.track(region_map_figure(rm, run.out / f"region_map_{_tag(g)}.png"))
    print(f"group {g} at x = {fx}: codes {sorted(rm.codes())}"
          + (f"; {th.diagnostic}" if th.diagnostic else ""))
    return EXIT_OK


def cmd_frequencies(args, run: _Run) -> int:
    system = _model_system(run.base, args.preset)
    clinic = build_clinic_model(run.base, seed=args.seed)
    spec = _optimal_spec(run.base, args.preset, clinic, args.method)
    est = estimate_frequencies(spec, system, horizon=args.years, seed=args.seed,
                               replications=args.reps, clinic=clinic)
    run.write("frequencies.csv", frequencies_csv(est))
    run.write("frequencies.txt", frequencies_text(est))
    print(frequencies_text(est), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _common(preset: str, years: int, reps: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON configuration (default: built-in parameter set)")
    p.add_argument("--seed", type=int, default=0, help="root seed for every random stream")
    p.add_argument("--years", type=int, default=years, help="simulated years")
    p.add_argument("--reps", type=int, default=reps, help="replications")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--preset", choices=("desk", "paper"), default=preset,
                   help="desk scales arrival rates by 0.2 with tight bounds")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tbscreen",
                                     description="Employee TB screening policies: solve, "
                                                 "simulate, calibrate and export.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("solve", parents=[_common("desk", 100, 30)],
                       help="per-group optimal policies by column generation")
    p.add_argument("--method", choices=("cg", "exact"), default="cg")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--verify-exact", action="store_true",
                   help="check each group against value iteration")
    p.add_argument("--columns-per-round", type=int, default=0,
                   help="columns added per pricing round (0: every improving column)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[_common("paper", 100, 30)],
                       help="simulate one policy")
    p.add_argument("--policy", choices=("current", "optimal", "threshold"), default="current")
    p.add_argument("--method", choices=("cg", "exact"), default="exact")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", parents=[_common("paper", 100, 30)],
                       help="current vs threshold vs optimal on common random numbers")
    p.add_argument("--method", choices=("cg", "exact"), default="exact")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", parents=[_common("paper", 200, 20)],
                       help="fit beta to a long-run infection target")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--metric", choices=("alpha", "infection_rate"), default="alpha")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("export-map", parents=[_common("desk", 100, 30)],
                       help="region map and thresholds of one group")
    p.add_argument("--group", required=True, help="salary,risk e.g. 2,2")
    p.add_argument("--fixed-x", type=int, default=None)
    p.add_argument("--figures", action="store_true", help="also render a PNG figure")
    p.set_defaults(func=cmd_export_map)

    p = sub.add_parser("frequencies", parents=[_common("paper", 100, 100)],
                       help="testing frequencies of the optimal policy")
    p.add_argument("--method", choices=("cg", "exact"), default="exact")
    p.set_defaults(func=cmd_frequencies)
    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        base = _load(args)
        r = _Run(args, base)
        code = args.func(args, r)
        r.manifest(argv)
        return code
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConvergenceError, ColumnGenerationError, LpError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
