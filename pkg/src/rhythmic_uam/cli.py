"""Command-line entry point: optimize, sweeps, Pareto front and simulation replay."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, IntersectionConfig, load_config
from .optimizer import (Demand, InfeasibleDemand, NotConverged, Solution, nondominated,
                        optimize, pareto_sweep, sweep_demand, sweep_guard_band)
from .report import (config_block, dump_solution, kv_text, load_solution, provenance,
                     solution_record, sweep_rows, table_text, write_solution_bundle)
from .simulator import (MIN_CYCLES, SimulationError, empirical_entry_flow, empirical_flow, empirical_power,
                        simulate, verify_separation)

EXIT_OK, EXIT_VALIDATION, EXIT_NOT_CONVERGED, EXIT_SIMULATION = 0, 2, 3, 4


def _grid(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("grid must be nonempty")
    return vals


def _alpha(text: str) -> float:
    a = float(text)
    if not 0.0 <= a <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1], got {a}")
    return a


def _ds(text: str) -> float:
    d = float(text)
    if not 0.0 <= d <= 1.0:
        raise argparse.ArgumentTypeError(f"d_s must lie in [0, 1], got {d}")
    return d


def _write_report(out: Path, config: IntersectionConfig, args, body: dict, name="report.txt"):
    out.mkdir(parents=True, exist_ok=True)
    text = config_block(config) + kv_text(body, "summary") + \
        kv_text(provenance(args.seed, args.config), "provenance")
    (out / name).write_text(text)
    return text


def _trend(values, direction: str, rtol: float = 1e-9) -> bool:
    """Monotone up to round-off: steps against ``direction`` within ``rtol`` are ties."""
    sign = 1.0 if direction == "up" else -1.0
    return all(sign * (b - a) >= -rtol * max(abs(a), abs(b), 1.0) for a, b in zip(values, values[1:]))


def cmd_optimize(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    demand = Demand.from_config(config, args.ds)
    code = EXIT_OK
    try:
        sol = optimize(config, demand, args.alpha)
    except NotConverged as exc:
        sol, code = exc.solution, EXIT_NOT_CONVERGED
        print(f"not converged: {exc}", file=sys.stderr)
    if not sol.converged and code == EXIT_OK:
        code = EXIT_NOT_CONVERGED
        print(f"not converged: {sol.message}", file=sys.stderr)
    write_solution_bundle(out, sol)
    summary = solution_record(sol)
    _write_report(out, config, args, summary)
    print(kv_text(summary), end="")
    return code


def _sweep_output(args, config, rows, name, footer):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header, table = sweep_rows(rows, name)
    (out / "table.tsv").write_text(table_text(header, table, footer))
    for k, r in enumerate(rows):
        if r.ok:
            (out / f"point_{k:02d}_solution.txt").write_text(dump_solution(r.solution))
    failed = sum(not r.ok for r in rows)
    _write_report(out, config, args, {"points": len(rows), "failed": failed})
    print(table_text(header, table, footer), end="")
    return EXIT_OK if not failed else EXIT_NOT_CONVERGED


def _trend_footer(rows, flow_dir, power_dir):
    ok = [r.solution for r in rows if r.ok]
    f = [s.breakdown.f_int for s in ok]
    P = [s.breakdown.P_int for s in ok]
    J = [s.breakdown.J for s in ok]
    word = {"up": "nondecreasing", "down": "nonincreasing"}
    return [f"flow {word[flow_dir]}: {'yes' if _trend(f, flow_dir) else 'no'}",
            f"J {word[flow_dir]}: {'yes' if _trend(J, flow_dir) else 'no'}",
            f"power {word[power_dir]}: {'yes' if _trend(P, power_dir) else 'no'}"]


def cmd_sweep_guard(args) -> int:
    config = load_config(args.config)
    rows = sweep_guard_band(config, args.grid, d_s=args.ds, alpha=args.alpha, jobs=args.jobs)
    return _sweep_output(args, config, rows, "guard_fraction", _trend_footer(rows, "down", "up"))


def cmd_sweep_demand(args) -> int:
    config = load_config(args.config)
    rows = sweep_demand(config, args.grid, args.level, alpha=args.alpha, jobs=args.jobs)
    footer = _trend_footer(rows, "up", "down") + [f"traffic level: {args.level}"]
    return _sweep_output(args, config, rows, "d_s", footer)


def cmd_pareto(args) -> int:
    config = load_config(args.config)
    demand = Demand.from_config(config, args.ds)
    results = pareto_sweep(config, demand, args.grid, jobs=args.jobs)
    front = {id(s) for s in nondominated([s for _, s in results])}
    rows, failed = [], 0
    for a, s in results:
        if isinstance(s, Solution):
            rows.append([a, s.breakdown.f_int, s.breakdown.P_int, s.breakdown.J, s.converged,
                         id(s) in front, ""])
        else:
            failed += 1
            rows.append([a, "nan", "nan", "nan", False, False, str(s).replace("\t", " ")])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["alpha", "f_int", "P_int", "J", "converged", "nondominated", "error"]
    (out / "pareto.tsv").write_text(table_text(header, rows))
    for k, (_, s) in enumerate(results):
        if isinstance(s, Solution):
            (out / f"point_{k:02d}_solution.txt").write_text(dump_solution(s))
    _write_report(out, config, args, {"points": len(rows), "failed": failed})
    print(table_text(header, rows), end="")
    return EXIT_OK if not failed else EXIT_NOT_CONVERGED


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.horizon < MIN_CYCLES:
        raise ValueError(f"--horizon must be at least {MIN_CYCLES} cycles, got {args.horizon}")
    sol = load_solution(Path(args.solution).read_text(), config)
    trace = simulate(sol, config, args.horizon)
    rep = verify_separation(trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.tsv").write_text(trace.samples_table())
    (out / "events.tsv").write_text(trace.events_table())
    (out / "separation.txt").write_text(
        kv_text(rep.to_record(), "separation") + "".join(f"# violation: {v}\n" for v in rep.violations))
    ef, ep = empirical_flow(trace), empirical_power(trace)
    rows = [["flow", sol.breakdown.f_int, ef, ef / sol.breakdown.f_int - 1],
            ["power", sol.breakdown.P_int, ep, ep / sol.breakdown.P_int - 1]]
    rows += [[f"entry_lane_{k}", "nan", v, "nan"] for k, v in empirical_entry_flow(trace).items()]
    (out / "comparison.tsv").write_text(table_text(["quantity", "analytic", "empirical", "rel_delta"], rows))
    summary = {"vehicles": trace.n_vehicles, "separation_ok": rep.ok,
               "flow_rel_delta": rows[0][3], "power_rel_delta": rows[1][3]}
    _write_report(out, config, args, summary)
    print(kv_text(summary), end="")
    for v in rep.violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_OK if rep.ok else EXIT_SIMULATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhythmic-uam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, ds=True, alpha=True):
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="recorded in provenance")
        p.add_argument("--jobs", type=int, default=1, help="parallel solves in sweeps")
        if ds:
            p.add_argument("--ds", type=_ds, default=0.5, help="straight demand fraction")
        if alpha:
            p.add_argument("--alpha", type=_alpha, default=0.9845, help="Pareto weight")

    p = sub.add_parser("optimize", help="solve for one weight and demand split")
    common(p)
    p.set_defaults(func=cmd_optimize)
    p = sub.add_parser("sweep-guard", help="re-optimize over guard-band fractions of l_e")
    common(p)
    p.add_argument("--grid", type=_grid, default=_grid("0.05,0.10,0.20,0.30"))
    p.set_defaults(func=cmd_sweep_guard)
    p = sub.add_parser("sweep-demand", help="re-optimize over straight demand fractions")
    common(p, ds=False)
    p.add_argument("--grid", type=_grid, default=_grid("0.3,0.5,0.7,0.9"))
    p.add_argument("--level", choices=("medium", "heavy"), default="medium")
    p.set_defaults(func=cmd_sweep_demand)
    p = sub.add_parser("pareto", help="sweep the weight alpha")
    common(p, alpha=False)
    p.add_argument("--grid", type=_grid, default=_grid("0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"))
    p.set_defaults(func=cmd_pareto)
    p = sub.add_parser("simulate", help="replay a solution dump and check it")
    common(p, ds=False, alpha=False)
    p.add_argument("--solution", required=True, help="solution.txt written by optimize")
    p.add_argument("--horizon", type=int, default=6, help="cycles of four beats")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SimulationError as exc:
        print(f"simulation: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except (InfeasibleDemand, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
