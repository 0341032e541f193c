"""Plain-text records and tables for run reports; all floats at 17 significant digits."""

from __future__ import annotations

import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, IntersectionConfig, format_config
from .core import build_intersection, enumerate_paths, lane_capacity, max_vehicles_per_platoon
from .optimizer import DecisionVector, Demand, Solution, SweepRow, solution_from_decision


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def kv_text(record: dict, header: str | None = None) -> str:
    lines = [f"# {header}"] if header else []
    lines += [f"{k} = {fmt(v)}" for k, v in record.items()]
    return "\n".join(lines) + "\n"


def read_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def table_text(header: list[str], rows: list[list], footer: list[str] | None = None) -> str:
    lines = ["\t".join(header)] + ["\t".join(fmt(v) for v in r) for r in rows]
    lines += [f"# {f}" for f in footer or []]
    return "\n".join(lines) + "\n"


def solution_record(sol: Solution) -> dict:
    rec = {"alpha": sol.breakdown.alpha, "d_s": sol.demand.d_s,
           "f_int_ent": sol.demand.f_int_ent, "converged": sol.converged,
           "iterations": sol.iterations, "feasibility": sol.feasibility,
           "f_int": sol.breakdown.f_int, "P_int": sol.breakdown.P_int, "J": sol.breakdown.J}
    for p, x in zip(sol.paths, sol.decision.x_p):
        rec[f"x.{p.path_id}"] = float(x)
    for i, a in enumerate(sol.decision.free_s, start=4):
        rec[f"free_s.{i}"] = float(a)
    for i, b in enumerate(sol.decision.free_c, start=4):
        rec[f"free_c.{i}"] = float(b)
    return rec


def dump_solution(sol: Solution) -> str:
    return kv_text(solution_record(sol), "solution")


def _ordered(rec: dict[str, str], prefix: str) -> list[float]:
    keys = sorted((k for k in rec if k.startswith(prefix)), key=lambda k: int(k[len(prefix):]))
    return [float(rec[k]) for k in keys]


def load_solution(text: str, config: IntersectionConfig) -> Solution:
    """Rebuild a solution from its dump; objective terms are re-evaluated, not trusted."""
    rec = read_kv(text)
    try:
        demand = Demand(float(rec["d_s"]), float(rec["f_int_ent"]))
        alpha = float(rec["alpha"])
    except KeyError as exc:
        raise ConfigError(f"solution dump lacks {exc.args[0]!r}", key=exc.args[0]) from None
    paths = enumerate_paths(build_intersection(config), 1)
    try:
        x = [float(rec[f"x.{p.path_id}"]) for p in paths]
    except KeyError as exc:
        raise ConfigError(f"solution dump lacks {exc.args[0]!r}", key=exc.args[0]) from None
    sol = solution_from_decision(config, demand, DecisionVector(
        np.array(x), _ordered(rec, "free_s."), _ordered(rec, "free_c.")), alpha)
    sol.converged = rec.get("converged", "false") == "true"
    sol.iterations = int(rec.get("iterations", 0))
    return sol


def provenance(seed: int, config_path: str | None) -> dict:
    """Seed, version and a reproducible timestamp (SOURCE_DATE_EPOCH or the config's mtime)."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None and config_path:
        epoch = int(Path(config_path).stat().st_mtime)
    stamp = (datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
             if epoch is not None else "unset")
    return {"seed": seed, "tool_version": __version__, "timestamp": stamp}


def straight_share_rows(sol: Solution) -> list[list]:
    return [[lane, x] for lane, x in sorted(sol.straight_marginals().items())]


def heatmap_rows(sol: Solution) -> list[list]:
    return [[lane, d, x] for (lane, d), x in sorted(sol.curved_marginals().items())]


def write_solution_bundle(out: Path, sol: Solution, prefix: str = "") -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{prefix}solution.txt").write_text(dump_solution(sol))
    (out / f"{prefix}breakdown.txt").write_text(kv_text(sol.breakdown.to_record(), "objective"))
    (out / f"{prefix}straight_shares.tsv").write_text(
        table_text(["entry_lane", "share"], straight_share_rows(sol)))
    (out / f"{prefix}curved_heatmap.tsv").write_text(
        table_text(["entry_lane", "divergence_point", "share"], heatmap_rows(sol)))
    (out / f"{prefix}history.tsv").write_text(table_text(
        ["step", "f_int", "P_int", "J", "violation"],
        [[k, h.f_int, h.P_int, h.J, h.violation] for k, h in enumerate(sol.history)]))


def config_block(config: IntersectionConfig) -> str:
    return "# config\n" + format_config(config)


def sweep_rows(rows: list[SweepRow], value_name: str) -> tuple[list[str], list[list]]:
    curved_keys = sorted({k for r in rows if r.ok for k in r.solution.curved_marginals()})
    lanes = sorted({k for r in rows if r.ok for k in r.solution.straight_marginals()})
    header = [value_name, "l_g", "n_v_max", "lane_capacity", "f_int", "P_int", "J", "converged"]
    header += [f"x_straight_{lane}" for lane in lanes]
    header += [f"x_curved_{a}_{b}" for a, b in curved_keys]
    header += ["error"]
    table = []
    for r in rows:
        try:
            n_v, cap = max_vehicles_per_platoon(r.config), lane_capacity(r.config)
        except ValueError:
            n_v, cap = 0, 0.0
        row = [r.value, r.config.l_g, n_v, cap]
        if r.ok:
            s = r.solution
            row += [s.breakdown.f_int, s.breakdown.P_int, s.breakdown.J, s.converged]
            row += [s.straight_marginals().get(lane, 0.0) for lane in lanes]
            row += [s.curved_marginals().get(k, 0.0) for k in curved_keys]
            row += [""]
        else:
            row += ["nan", "nan", "nan", False] + ["nan"] * (len(lanes) + len(curved_keys))
            row += [r.error.replace("\t", " ")]
        table.append(row)
    return header, table
