import itertools
import pickle

import numpy as np
import pytest

from rhythmic_uam.config import reference_config
from rhythmic_uam.core import DemandClass, max_vehicles_per_platoon
from oracles import frozen_score, vertex_oracle
from rhythmic_uam.optimizer import (FEAS_TOL, DecisionVector, Demand, InfeasibleDemand, NotConverged,
                                    assemble_constraints, initial_decision, nondominated, optimize,
                                    pareto_sweep, solution_from_decision, sweep_demand,
                                    sweep_guard_band, verify_feasibility)


def test_constraint_counts(cfg):
    cset = assemble_constraints(cfg, Demand.from_config(cfg, 0.5))
    assert cset.counts() == {"equalities": 2, "entry_caps": 3, "exit_caps": 2}
    assert all(c.bound == pytest.approx(1 / 3) for c in cset.share_inequalities)
    margins = cset.trajectory_margins(*_cubics(cfg))
    assert min(margins.values()) >= 0


def _cubics(cfg):
    from rhythmic_uam.optimizer import curved_trajectory, straight_trajectory
    return straight_trajectory(cfg, [0.0]), curved_trajectory(cfg, [0.0])


def test_all_straight_pins_curved(cfg):
    sol = optimize(cfg, Demand(1.0, 2.0), 0.9845)
    assert all(v == 0 for v in sol.curved_marginals().values())
    assert sum(sol.straight_marginals().values()) == pytest.approx(1.0)


def test_overcapacity_rejected(cfg):
    with pytest.raises(InfeasibleDemand):
        assemble_constraints(cfg, Demand(0.5, 3.01))


def test_unservable_split_rejected(cfg):
    # the leftmost lane alone cannot take 90% of a full-capacity stream's turns
    with pytest.raises(InfeasibleDemand):
        assemble_constraints(cfg, Demand(0.1, 3.0))


def test_demand_validation():
    with pytest.raises(ValueError):
        Demand(1.2, 1.0)
    with pytest.raises(ValueError):
        Demand(0.5, -1.0)


def test_uniform_start(cfg):
    cset = assemble_constraints(cfg, Demand.from_config(cfg, 0.5))
    d = initial_decision(cfg, cset.paths, cset.demand)
    assert np.allclose(d.x_p, [1 / 6] * 3 + [1 / 8] * 4)
    assert np.all(d.free_s == 0) and np.all(d.free_c == 0)


def test_eval_optimum(eval_solution, cfg):
    sol = eval_solution
    assert sol.converged and sol.iterations <= 200
    assert sol.feasibility <= FEAS_TOL
    checks = verify_feasibility(sol, cfg)
    assert max(checks.values()) <= FEAS_TOL
    init = solution_from_decision(cfg, sol.demand, initial_decision(cfg, sol.paths, sol.demand),
                                  0.9845)
    assert sol.breakdown.J >= init.breakdown.J


def test_share_only_matches_vertex_oracle(cfg):
    demand = Demand.from_config(cfg, 0.5)
    sol = optimize(cfg, demand, 0.9845, optimize_trajectories=False)
    best, _ = vertex_oracle(assemble_constraints(cfg, demand), frozen_score(cfg, sol, 0.9845))
    assert sol.breakdown.J == pytest.approx(best, abs=1e-6)


def test_flow_only_matches_grid_search(cfg):
    demand = Demand(0.5, 1.5)
    sol = optimize(cfg, demand, 1.0, optimize_trajectories=False)
    cset = assemble_constraints(cfg, demand)
    score = frozen_score(cfg, sol, 1.0)
    cap = cset.entry_caps[0].bound
    grid = np.linspace(0, 0.5, 51)
    best = -np.inf
    for c in itertools.product(grid, repeat=3):
        c4 = 0.5 - sum(c)
        x = np.array([0, 0, 0.5, *c, c4])
        ok = (c4 >= -1e-12 and c[0] + c[1] <= cap + 1e-12 and c[2] + c4 <= cap + 1e-12
              and c[0] + c[2] <= cap + 1e-12 and c[1] + c4 <= cap + 1e-12)
        if ok:
            best = max(best, score(x))
    assert sol.breakdown.J >= best - 1e-9
    # curved mass goes to the paths with the fewest straight segments first
    n_s = {p.key: p.n_s for p in sol.paths if p.demand_class is DemandClass.LEFT}
    fav = min(n_s, key=n_s.get)
    assert sol.curved_marginals()[fav] == pytest.approx(max(sol.curved_marginals().values()))


def test_min_power_all_straight(cfg):
    sol = optimize(cfg, Demand(1.0, 3.0), 0.0)
    assert sol.breakdown.J == pytest.approx(-sol.breakdown.P_int)
    assert sol.converged


def test_deterministic(cfg):
    demand = Demand.from_config(cfg, 0.7)
    a = optimize(cfg, demand, 0.9845)
    b = optimize(cfg, demand, 0.9845)
    assert np.array_equal(a.decision.x_p, b.decision.x_p)
    assert a.breakdown == b.breakdown and a.iterations == b.iterations


def test_budget_exhaustion_flags_unconverged(cfg):
    sol = optimize(cfg, Demand.from_config(cfg, 0.5), 0.9845, max_iter=3)
    assert not sol.converged and sol.iterations <= 3


def test_unreachable_caps_surface_best_effort(cfg):
    with pytest.raises(NotConverged) as exc:
        optimize(cfg.replace(theta_acc_max=0.01), Demand.from_config(cfg, 0.5), 0.9845, max_iter=20)
    best = exc.value.solution
    assert best is not None and not best.converged
    clone = pickle.loads(pickle.dumps(exc.value))
    assert clone.solution.breakdown == best.breakdown


def test_pareto_endpoints_and_consistency(cfg, eval_solution):
    demand = Demand.from_config(cfg, 0.5)
    res = pareto_sweep(cfg, demand, [1.0, 0.0, 0.9845])
    alphas = [a for a, _ in res]
    assert alphas == sorted(alphas)
    s0, s1 = res[0][1], res[-1][1]
    assert s1.breakdown.f_int >= s0.breakdown.f_int
    assert s1.breakdown.P_int >= s0.breakdown.P_int
    mid = res[1][1]
    assert np.array_equal(mid.decision.x_p, eval_solution.decision.x_p)
    assert mid.breakdown == eval_solution.breakdown


@pytest.mark.slow
def test_pareto_front_monotone(cfg):
    res = pareto_sweep(cfg, Demand.from_config(cfg, 0.5), list(np.linspace(0, 1, 11)))
    front = sorted(nondominated([s for _, s in res]), key=lambda s: s.breakdown.alpha)
    flows = [s.breakdown.f_int for s in front]
    assert all(b >= a - 1e-12 for a, b in zip(flows, flows[1:]))


def test_nondominated_filter(eval_solution):
    import dataclasses
    worse = dataclasses.replace(eval_solution, breakdown=dataclasses.replace(
        eval_solution.breakdown, f_int=eval_solution.breakdown.f_int - 1))
    assert nondominated([eval_solution, worse]) == [eval_solution]


def test_guard_sweep_zero_fraction_and_repeats(cfg):
    rows = sweep_guard_band(cfg, [0.0, 0.1, 0.1])
    assert all(r.ok for r in rows)
    assert max_vehicles_per_platoon(rows[0].config) == 5
    assert rows[1].solution.breakdown == rows[2].solution.breakdown
    assert rows[0].solution.breakdown.f_int > rows[1].solution.breakdown.f_int


def test_guard_sweep_records_failures(cfg):
    rows = sweep_guard_band(cfg, [0.5, 0.1])
    assert not rows[0].ok and rows[0].error and rows[1].ok


def test_pure_left_demand(cfg):
    rows = sweep_demand(cfg, [0.0], "medium")
    assert rows[0].ok
    assert all(v == 0 for v in rows[0].solution.straight_marginals().values())


def test_unknown_traffic_level(cfg):
    with pytest.raises(ValueError):
        sweep_demand(cfg, [0.5], "rush")


def test_solution_from_decision_round_trip(cfg, eval_solution):
    d = eval_solution.decision
    again = solution_from_decision(cfg, eval_solution.demand,
                                   DecisionVector(d.x_p, d.free_s, d.free_c), 0.9845)
    assert again.breakdown.J == pytest.approx(eval_solution.breakdown.J, rel=1e-15)
