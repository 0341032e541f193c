import filecmp

import pytest

from rhythmic_uam.cli import main
from rhythmic_uam.config import load_config
from rhythmic_uam.report import load_solution, read_kv

EVAL_TEXT = """l_c = 70
n_c = 6
delta_t = 1
l_g = 1
l_v = 0.5
d_f_min = 1.5
rho_ent = 0.3
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "eval.cfg"
    cfg.write_text(EVAL_TEXT)
    assert main(["optimize", "--config", str(cfg), "--out", str(root / "opt")]) == 0
    return root, cfg


def test_optimize_outputs(workspace):
    root, _ = workspace
    out = root / "opt"
    summary = read_kv((out / "report.txt").read_text())
    assert summary["converged"] == "true"
    heat = (out / "curved_heatmap.tsv").read_text().splitlines()
    assert heat[0] == "entry_lane\tdivergence_point\tshare" and len(heat) == 5
    bars = (out / "straight_shares.tsv").read_text().splitlines()
    assert len(bars) == 4
    report = (out / "report.txt").read_text()
    for block in ("# config", "# summary", "# provenance", "tool_version", "seed = 0"):
        assert block in report


def test_dump_round_trip(workspace):
    root, cfg = workspace
    text = (root / "opt" / "solution.txt").read_text()
    sol = load_solution(text, load_config(cfg))
    assert abs(sol.breakdown.J - float(read_kv(text)["J"])) <= 1e-12 * abs(sol.breakdown.J)


def test_reports_byte_identical(workspace):
    root, cfg = workspace
    assert main(["optimize", "--config", str(cfg), "--out", str(root / "again")]) == 0
    cmp = filecmp.dircmp(root / "opt", root / "again")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    assert cmp.same_files


def test_missing_key(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(EVAL_TEXT.replace("l_v = 0.5\n", ""))
    assert main(["optimize", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "l_v" in capsys.readouterr().err


def test_bad_line_reported(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(EVAL_TEXT.replace("l_g = 1", "l_g = wide"))
    assert main(["optimize", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "line 4" in capsys.readouterr().err


def test_alpha_out_of_range_rejected_before_solve(workspace, tmp_path):
    _, cfg = workspace
    assert main(["optimize", "--config", str(cfg), "--alpha", "1.5", "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "solution.txt").exists()


def test_not_converged_exit(tmp_path):
    p = tmp_path / "tight.cfg"
    p.write_text(EVAL_TEXT + "theta_acc_max = 0.01\n")
    assert main(["optimize", "--config", str(p), "--out", str(tmp_path / "o")]) == 3
    assert read_kv((tmp_path / "o" / "solution.txt").read_text())["converged"] == "false"


def test_guard_sweep_footer(tmp_path):
    p = tmp_path / "light.cfg"
    p.write_text(EVAL_TEXT.replace("rho_ent = 0.3", "rho_ent = 0.2"))
    assert main(["sweep-guard", "--config", str(p), "--jobs", "2", "--out", str(tmp_path / "g")]) == 0
    lines = (tmp_path / "g" / "table.tsv").read_text().splitlines()
    assert len([ln for ln in lines if not ln.startswith("#")]) == 5
    assert "# flow nonincreasing: yes" in lines
    assert len(list((tmp_path / "g").glob("point_*_solution.txt"))) == 4


def test_single_point_sweep_equals_optimize(workspace, tmp_path):
    root, cfg = workspace
    assert main(["sweep-guard", "--config", str(cfg), "--grid", "0.1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "point_00_solution.txt").read_text() == (root / "opt" / "solution.txt").read_text()


def test_heavy_demand_sweep(workspace, tmp_path):
    _, cfg = workspace
    code = main(["sweep-demand", "--config", str(cfg), "--grid", "0.3,0.5,0.7", "--level", "heavy",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = [ln.split("\t") for ln in (tmp_path / "table.tsv").read_text().splitlines()
            if not ln.startswith("#")]
    col = rows[0].index("x_straight_3")
    assert all(float(r[col]) > 0 for r in rows[1:])


def test_sweep_records_failures(workspace, tmp_path):
    _, cfg = workspace
    assert main(["sweep-guard", "--config", str(cfg), "--grid", "0.1,0.5", "--out", str(tmp_path)]) == 3
    last = (tmp_path / "table.tsv").read_text().splitlines()[2]
    assert "capacity" in last


def test_pareto_table(workspace, tmp_path):
    _, cfg = workspace
    assert main(["pareto", "--config", str(cfg), "--grid", "0,1", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "pareto.tsv").read_text().splitlines()
    assert lines[0].split("\t")[:2] == ["alpha", "f_int"] and len(lines) == 3


def test_simulate_replay(workspace, tmp_path):
    root, cfg = workspace
    sol = str(root / "opt" / "solution.txt")
    assert main(["simulate", "--config", str(cfg), "--solution", sol, "--out", str(tmp_path)]) == 0
    for name in ("trace.tsv", "events.tsv", "separation.txt", "comparison.tsv", "report.txt"):
        assert (tmp_path / name).exists()
    rows = [ln.split("\t") for ln in (tmp_path / "comparison.tsv").read_text().splitlines()[1:3]]
    assert all(abs(float(r[3])) < 0.02 for r in rows)


def test_simulate_short_horizon(workspace, tmp_path, capsys):
    root, cfg = workspace
    sol = str(root / "opt" / "solution.txt")
    assert main(["simulate", "--config", str(cfg), "--solution", sol, "--horizon", "1",
                 "--out", str(tmp_path)]) == 2
    assert "horizon" in capsys.readouterr().err


def test_simulate_rejects_crafted_overload(workspace, tmp_path, capsys):
    root, cfg = workspace
    text = (root / "opt" / "solution.txt").read_text()
    rec = read_kv(text)
    for k in rec:
        if k.startswith("x."):
            text = text.replace(f"{k} = {rec[k]}\n", f"{k} = {'1' if k == 'x.S3' else '0'}\n")
    text = text.replace("d_s = 0.5", "d_s = 1")
    crafted = tmp_path / "crafted.txt"
    crafted.write_text(text)
    assert main(["simulate", "--config", str(cfg), "--solution", str(crafted),
                 "--out", str(tmp_path / "s")]) == 4
    assert "violates" in capsys.readouterr().err
