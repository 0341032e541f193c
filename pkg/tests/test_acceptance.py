"""End-to-end acceptance checks. Each test prints one PASS/FAIL verdict line."""

import math
import time

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from oracles import frozen_score, quad_abs, random_full_load_shares, vertex_oracle
from rhythmic_uam.config import reference_config
from rhythmic_uam.core import lane_capacity
from rhythmic_uam.metrics import (Assignment, abs_integral, definite_integral, intersection_flow,
                                  intersection_power)
from rhythmic_uam.optimizer import (DecisionVector, Demand, InfeasibleDemand, NotConverged,
                                    assemble_constraints, optimize,
                                    solution_from_decision, sweep_demand, sweep_guard_band,
                                    verify_feasibility)
from rhythmic_uam.simulator import empirical_flow, empirical_power, simulate, verify_separation
from rhythmic_uam.trajectory import (eliminate_boundary_curved, eliminate_boundary_straight,
                                     straight_closed_form)

ALPHA = 0.9845


def nondecreasing(v, rtol=1e-9):
    return all(b - a >= -rtol * max(abs(a), abs(b), 1.0) for a, b in zip(v, v[1:]))


def nonincreasing(v, rtol=1e-9):
    return nondecreasing([-x for x in v], rtol)


@pytest.mark.criterion(1, "boundary elimination exact for random tails")
def test_boundary_exactness():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst, worst_cf = 0.0, 0.0
    for k in range(1000):
        dt = (0.5, 1.0, 2.0)[k % 3]
        size = 1 + k % 4
        i = np.arange(4, 4 + size)
        z = rng.normal(size=size)
        s = eliminate_boundary_straight(z * 10.0 / dt**i, 10.0, dt)
        c = eliminate_boundary_curved(z / dt**i, dt, 10.0)
        worst = max(worst, s.boundary_residuals().max(), c.boundary_residuals().max())
        a2, a3 = straight_closed_form(s.free_tail, dt)
        scale = np.abs(s.free_tail * dt ** (i - 2)).sum() + 10.0 / dt
        worst_cf = max(worst_cf, abs(a2 - s.coeffs[2]) / scale,
                       abs(a3 - s.coeffs[3]) * dt / scale)
    elapsed = time.perf_counter() - start
    assert worst < 1e-9
    assert worst_cf < 1e-14
    assert elapsed < 1.0


@pytest.mark.criterion(2, "curved quadratic coefficient satisfies the end angle")
def test_curved_coefficient():
    tr = eliminate_boundary_curved([], 1.0)
    assert tr.coeffs[2] == pytest.approx(1.5 * math.pi - 3, rel=1e-14)
    assert abs(tr.coeffs[2] - 1.7124) < 1e-4
    assert tr.poly(1.0) == pytest.approx(math.pi / 2, rel=1e-14)
    printed = Polynomial([0.0, 1.0, math.pi - 3, 2 - math.pi])
    assert abs(printed(1.0) - math.pi / 2) > 1e-9
    assert printed(1.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.criterion(3, "simulated flow and power within 2% of the formulas")
def test_analytic_vs_simulated(cfg):
    rng = np.random.default_rng(3)
    demand = Demand.from_config(cfg, 0.0)
    start = time.perf_counter()
    worst_f = worst_p = 0.0
    done = 0
    while done < 20:
        x = random_full_load_shares(rng)
        tails = rng.uniform(-0.2, 0.2, 2)
        d = DecisionVector(x, [tails[0] * cfg.l_e], [tails[1]])
        dem = Demand(float(x[:3].sum()), demand.f_int_ent)
        sol = solution_from_decision(cfg, dem, d, ALPHA)
        if max(verify_feasibility(sol, cfg).values()) > 1e-6:
            continue
        tr = simulate(sol, cfg, 10, background=False)
        worst_f = max(worst_f, abs(empirical_flow(tr) / sol.breakdown.f_int - 1))
        worst_p = max(worst_p, abs(empirical_power(tr) / sol.breakdown.P_int - 1))
        done += 1
    elapsed = time.perf_counter() - start
    print(f"worst flow error {worst_f:.2e}, worst power error {worst_p:.2e}, {elapsed:.1f} s")
    assert worst_f < 0.02 and worst_p < 0.02
    assert elapsed < 30


@pytest.mark.criterion(4, "flow and power bit-identical under straight redistribution")
def test_straight_share_invariance(eval_solution, cfg):
    rng = np.random.default_rng(4)
    sol = eval_solution
    seg = sol.segment
    paths = sol.paths
    for _ in range(200):
        # dyadic shares add exactly, so any difference would come from the formulas
        units = rng.integers(0, 1 << 10, len(paths)).astype(float)
        x = units / units.sum()
        x = np.round(x * 2**20) / 2**20
        x[-1] = 1.0 - x[:-1].sum()
        straight = x[:3].copy()
        moved = x.copy()
        moved[:3] = rng.permutation(straight)
        ref = Assignment(paths, x)
        other = Assignment(paths, moved)
        assert intersection_flow(ref, seg.V_bar_s, seg.V_bar_c, cfg) == \
            intersection_flow(other, seg.V_bar_s, seg.V_bar_c, cfg)
        assert intersection_power(ref, seg.E_s, seg.E_c, cfg) == \
            intersection_power(other, seg.E_s, seg.E_c, cfg)
        lump = x.copy()
        lump[:3] = 0.0
        lump[int(rng.integers(3))] = straight.sum()
        assert intersection_flow(Assignment(paths, lump), seg.V_bar_s, seg.V_bar_c, cfg) == \
            intersection_flow(ref, seg.V_bar_s, seg.V_bar_c, cfg)


@pytest.mark.criterion(5, "share-only optimum equals the vertex-enumeration optimum")
def test_lp_oracle(cfg):
    for d_s in (0.4, 0.5, 0.8):
        demand = Demand.from_config(cfg, d_s)
        sol = optimize(cfg, demand, ALPHA, optimize_trajectories=False)
        best, _ = vertex_oracle(assemble_constraints(cfg, demand), frozen_score(cfg, sol, ALPHA))
        assert abs(sol.breakdown.J - best) <= 1e-6


@pytest.mark.criterion(6, "converges within 200 iterations, flow up and power down")
def test_convergence(cfg):
    start = time.perf_counter()
    sol = optimize(cfg, Demand.from_config(cfg, 0.5), ALPHA)
    elapsed = time.perf_counter() - start
    f = [h.f_int for h in sol.history]
    P = [h.P_int for h in sol.history]
    print(f"{sol.iterations} evaluations, {len(sol.history)} accepted iterates, {elapsed:.1f} s")
    assert sol.converged and sol.feasibility <= 1e-6
    assert max(verify_feasibility(sol, cfg).values()) <= 1e-6
    assert sol.iterations <= 200
    assert len(f) >= 2 and nondecreasing(f) and nonincreasing(P)
    assert elapsed < 60


@pytest.mark.criterion(7, "guard band: flow and J nonincreasing, power nondecreasing")
def test_guard_trend(cfg):
    # at rho = 0.3 a 30% guard band leaves 3 seats per platoon, below the demand
    light = cfg.replace(rho_ent=0.2)
    start = time.perf_counter()
    rows = sweep_guard_band(light, [0.05, 0.10, 0.20, 0.30], d_s=0.5, alpha=ALPHA, jobs=2)
    elapsed = time.perf_counter() - start
    assert all(r.ok and r.solution.converged for r in rows)
    f = [r.solution.breakdown.f_int for r in rows]
    P = [r.solution.breakdown.P_int for r in rows]
    J = [r.solution.breakdown.J for r in rows]
    print("flow", f, "power", P)
    assert nonincreasing(f) and nonincreasing(J) and nondecreasing(P)
    assert elapsed < 300


@pytest.mark.criterion(8, "demand split: medium trend and heavy leftmost-lane saturation")
def test_demand_trend(cfg):
    start = time.perf_counter()
    grid = [0.3, 0.5, 0.7, 0.9]
    medium = sweep_demand(cfg, grid, "medium", alpha=ALPHA, jobs=2)
    heavy = sweep_demand(cfg, grid, "heavy", alpha=ALPHA, jobs=2)
    elapsed = time.perf_counter() - start
    assert all(r.ok for r in medium + heavy)
    f = [r.solution.breakdown.f_int for r in medium]
    P = [r.solution.breakdown.P_int for r in medium]
    print("medium flow", f, "power", P)
    saturated = []
    for r in heavy:
        cap = lane_capacity(r.config) / r.solution.demand.f_int_ent
        lanes = r.solution.straight_marginals()
        left = lanes[max(lanes)]
        spill = sum(v for k, v in lanes.items() if k != max(lanes))
        saturated.append(abs(left - min(cap, r.solution.demand.d_s)) < 1e-6
                         and (spill > 1e-9 or r.solution.demand.d_s <= cap))
    print("heavy saturation", saturated)
    assert all(saturated)
    assert any(r.solution.demand.d_s > lane_capacity(r.config) / r.solution.demand.f_int_ent
               for r in heavy)
    assert nonincreasing(P)
    assert elapsed < 300
    assert nondecreasing(f), "medium-traffic flow decreases with d_s"


def _random_config(rng):
    n_c = int(rng.choice([4, 6, 8]))
    l_e = float(rng.uniform(8.0, 14.0))
    frac = float(rng.uniform(0.0, 0.25))
    base = reference_config(n_c=n_c, l_c=l_e * (n_c + 1), l_g=frac * l_e)
    cap = lane_capacity(base) * (n_c // 2)
    rho = float(rng.uniform(0.2, 1.0)) * cap / base.v_u
    return base.replace(rho_ent=rho), float(rng.uniform(0.2, 1.0)), float(rng.uniform(0.9, 1.0))


@pytest.mark.criterion(9, "separation holds on optimized solutions; unspaced merge conflicts")
def test_safety(cfg, eval_solution):
    rng = np.random.default_rng(9)
    checked, attempts = 0, 0
    while checked < 50:
        attempts += 1
        assert attempts < 200
        config, d_s, alpha = _random_config(rng)
        try:
            sol = optimize(config, Demand.from_config(config, d_s), alpha)
        except (InfeasibleDemand, NotConverged):
            continue
        if not sol.converged:
            continue
        rep = verify_separation(simulate(sol, config, 4))
        assert rep.ok, (config, d_s, alpha, rep.violations)
        checked += 1
    unspaced = verify_separation(simulate(eval_solution, cfg, 4, spacing=False,
                                          check_feasible=False))
    assert not unspaced.ok and any("node" in v for v in unspaced.violations)


@pytest.mark.criterion(10, "exact polynomial integrals match adaptive quadrature")
def test_exact_integrals():
    rng = np.random.default_rng(10)
    worst = 0.0
    for k in range(1000):
        dt = (0.5, 1.0, 2.0)[k % 3]
        size = 1 + k % 3
        i = np.arange(4, 4 + size)
        z = rng.uniform(-0.3, 0.3, size)
        tr = (eliminate_boundary_straight(z * 10 / dt**i, 10.0, dt) if k % 2
              else eliminate_boundary_curved(z / dt**i, dt, 10.0))
        v = tr.arc_poly.deriv()
        a = v.deriv()
        if v(np.linspace(0, dt, 257)).min() < 0:
            continue
        pairs = ((definite_integral(v * v, 0, dt), quad(lambda t: v(t) ** 2, 0, dt, epsabs=0,
                                                        epsrel=1e-13)[0]),
                 (definite_integral(v**3, 0, dt), quad(lambda t: v(t) ** 3, 0, dt, epsabs=0,
                                                       epsrel=1e-13)[0]),
                 (abs_integral(v * a, 0, dt), quad_abs(lambda t: v(t) * a(t), 0, dt)))
        for exact, ref in pairs:
            worst = max(worst, abs(exact - ref) / max(abs(ref), 1e-300))
    assert worst < 1e-8
