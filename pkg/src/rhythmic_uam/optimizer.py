"""Joint optimization of path shares and segment trajectory tails.

The decision variables are the free shares (one share per demand class is
eliminated through its simplex equality) and the scaled free polynomial tails
shared by all straight and all curved segments. The constrained problem is
solved with COBYLA, a derivative-free trust-region method built on linear
approximations of objective and constraints.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .config import IntersectionConfig
from .core import (DemandClass, IntersectionGraph, Path, build_intersection,
                   direction_capacity, enumerate_paths, lane_capacity,
                   max_vehicles_per_platoon, platoon_spec)
from .metrics import (Assignment, ObjectiveBreakdown, SegmentMetrics, mean_square_velocity,
                      segment_energy_curved, segment_energy_straight, utilization_factor)
from .trajectory import (KinematicLimits, TrajectoryPolynomial, check_following_across,
                         check_following_distance, check_kinematics,
                         eliminate_boundary_curved, eliminate_boundary_straight)

MAX_ITER = 500
RHO_BEGIN = 0.1
RHO_END = 1e-6
FEAS_TOL = 1e-6


class InfeasibleDemand(ValueError):
    """Demand that no assignment can carry; raised before any solve."""


class NotConverged(RuntimeError):
    def __init__(self, message: str, solution: Solution):
        super().__init__(message)
        self.solution = solution

    def __reduce__(self):
        return (NotConverged, (str(self), self.solution))


@dataclass(frozen=True)
class Demand:
    d_s: float
    f_int_ent: float

    def __post_init__(self):
        if not 0.0 <= self.d_s <= 1.0:
            raise ValueError(f"d_s must lie in [0, 1], got {self.d_s}")
        if self.f_int_ent < 0:
            raise ValueError("entry flow must be nonnegative")

    @property
    def d_l(self) -> float:
        return 1.0 - self.d_s

    @classmethod
    def from_config(cls, config: IntersectionConfig, d_s: float) -> Demand:
        return cls(d_s, config.rho_ent * config.v_u)


@dataclass(frozen=True)
class LinearConstraint:
    """``coeffs . x <= bound`` over the path shares."""

    name: str
    coeffs: np.ndarray
    bound: float


@dataclass
class ConstraintSet:
    config: IntersectionConfig
    demand: Demand
    paths: tuple[Path, ...]
    limits: KinematicLimits
    equalities: list[LinearConstraint]      # coeffs . x == bound
    entry_caps: list[LinearConstraint]
    exit_caps: list[LinearConstraint]
    follow_gap: float                        # seat pitch, front to front (m)
    follow_min: float                        # required front-to-front displacement (m)

    @property
    def share_inequalities(self) -> list[LinearConstraint]:
        return self.entry_caps + self.exit_caps

    def trajectory_margins(self, straight: TrajectoryPolynomial,
                           curved: TrajectoryPolynomial) -> dict[str, float]:
        """Normalized margins (>= 0 when satisfied) of all trajectory constraints."""
        out = {}
        for tag, traj in (("s", straight), ("c", curved)):
            for k, m in check_kinematics(traj, self.limits).normalized().items():
                out[f"kin_{tag}_{k}"] = m
        cfg, g, need = self.config, self.follow_gap, self.follow_min
        scale = need
        out["follow_s"] = check_following_distance(straight, g, need, cfg.l_e, cfg.delta_t).margin / scale
        out["follow_s_s"] = check_following_across(straight, straight, g, need).margin / scale
        if self.has_curved:
            out["follow_c"] = check_following_distance(curved, g, need, cfg.l_e, cfg.delta_t).margin / scale
            out["follow_s_c"] = check_following_across(straight, curved, g, need).margin / scale
            out["follow_c_s"] = check_following_across(curved, straight, g, need).margin / scale
        return out

    @property
    def has_curved(self) -> bool:
        return any(p.demand_class is DemandClass.LEFT for p in self.paths)

    def share_margins(self, x: np.ndarray) -> np.ndarray:
        rows = [c.bound - float(c.coeffs @ x) for c in self.share_inequalities]
        return np.concatenate([x, rows])

    def counts(self) -> dict[str, int]:
        return {"equalities": len(self.equalities), "entry_caps": len(self.entry_caps),
                "exit_caps": len(self.exit_caps)}


def assemble_constraints(config: IntersectionConfig, demand: Demand,
                         graph: IntersectionGraph | None = None) -> ConstraintSet:
    graph = graph or build_intersection(config)
    paths = tuple(enumerate_paths(graph, 1))
    cap_total = direction_capacity(config)
    if demand.f_int_ent > cap_total * (1 + 1e-12):
        raise InfeasibleDemand(
            f"entry flow {demand.f_int_ent:.6g} veh/s exceeds capacity {cap_total:.6g} veh/s")
    straight = np.array([p.demand_class is DemandClass.STRAIGHT for p in paths], dtype=float)
    if demand.d_l > 0 and not np.any(straight == 0):
        raise InfeasibleDemand("left-turn demand but the grid has no curved paths")
    equalities = [LinearConstraint("straight_simplex", straight, demand.d_s),
                  LinearConstraint("left_simplex", 1.0 - straight, demand.d_l)]
    share_cap = (lane_capacity(config) / demand.f_int_ent) if demand.f_int_ent > 0 else math.inf
    entry_caps = []
    for lane in sorted({p.entry_lane for p in paths}):
        coeffs = np.array([float(p.entry_lane == lane) for p in paths])
        entry_caps.append(LinearConstraint(f"entry_lane_{lane}", coeffs, share_cap))
    exit_caps = []
    for lane in sorted({p.exit_lane for p in paths if p.demand_class is DemandClass.LEFT}):
        coeffs = np.array([float(p.demand_class is DemandClass.LEFT and p.exit_lane == lane)
                           for p in paths])
        exit_caps.append(LinearConstraint(f"exit_lane_{lane}", coeffs, share_cap))
    spec = platoon_spec(config)
    if not math.isfinite(share_cap):
        entry_caps, exit_caps = [], []
    else:
        # upper bound on a single lane can never exceed all of the direction's traffic
        entry_caps = [LinearConstraint(c.name, c.coeffs, min(c.bound, 1.0)) for c in entry_caps]
        exit_caps = [LinearConstraint(c.name, c.coeffs, min(c.bound, 1.0)) for c in exit_caps]
    cset = ConstraintSet(config, demand, paths, KinematicLimits.from_config(config),
                         equalities, entry_caps, exit_caps,
                         follow_gap=spec.seat_pitch, follow_min=config.l_v + config.d_f_min)
    if not share_polytope_nonempty(cset):
        raise InfeasibleDemand(
            f"no assignment of d_s={demand.d_s:g} fits the lane capacities")
    return cset


def share_polytope_nonempty(cset: ConstraintSet) -> bool:
    """Feasibility of the linear share constraints alone."""
    ineq = cset.share_inequalities
    res = linprog(np.zeros(len(cset.paths)),
                  A_ub=np.array([c.coeffs for c in ineq]) if ineq else None,
                  b_ub=np.array([c.bound for c in ineq]) if ineq else None,
                  A_eq=np.array([c.coeffs for c in cset.equalities]),
                  b_eq=np.array([c.bound for c in cset.equalities]),
                  bounds=(0, None), method="highs")
    return res.status == 0


@dataclass(frozen=True)
class DecisionVector:
    x_p: np.ndarray
    free_s: np.ndarray
    free_c: np.ndarray

    def __post_init__(self):
        for name in ("x_p", "free_s", "free_c"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).ravel())


def straight_trajectory(config: IntersectionConfig, free_s) -> TrajectoryPolynomial:
    return eliminate_boundary_straight(free_s, config.l_e, config.delta_t)


def curved_trajectory(config: IntersectionConfig, free_c) -> TrajectoryPolynomial:
    return eliminate_boundary_curved(free_c, config.delta_t, config.l_e)


def initial_decision(config: IntersectionConfig, paths, demand: Demand) -> DecisionVector:
    """Uniform shares within each demand class and zero free coefficients."""
    n_s = sum(p.demand_class is DemandClass.STRAIGHT for p in paths)
    n_c = len(paths) - n_s
    x = [demand.d_s / n_s if p.demand_class is DemandClass.STRAIGHT
         else (demand.d_l / n_c if n_c else 0.0) for p in paths]
    return DecisionVector(np.array(x), np.zeros(config.K_s - 3), np.zeros(config.K_c - 3))


@dataclass
class Iterate:
    f_int: float
    P_int: float
    J: float
    violation: float


@dataclass
class Solution:
    decision: DecisionVector
    breakdown: ObjectiveBreakdown
    feasibility: float
    iterations: int
    converged: bool
    paths: tuple[Path, ...]
    demand: Demand
    segment: SegmentMetrics
    history: list[Iterate] = field(default_factory=list)
    message: str = ""

    @property
    def assignment(self) -> Assignment:
        return Assignment(self.paths, self.decision.x_p)

    def curved_marginals(self) -> dict[tuple[int, int], float]:
        return {p.key: float(x) for p, x in zip(self.paths, self.decision.x_p)
                if p.demand_class is DemandClass.LEFT}

    def straight_marginals(self) -> dict[int, float]:
        return {p.entry_lane: float(x) for p, x in zip(self.paths, self.decision.x_p)
                if p.demand_class is DemandClass.STRAIGHT}


class _Problem:
    """Maps the reduced solver vector to decisions and evaluates objective and margins."""

    def __init__(self, cset: ConstraintSet, alpha: float, optimize_trajectories: bool,
                 fixed_s: np.ndarray, fixed_c: np.ndarray):
        self.cset, self.alpha = cset, alpha
        cfg = cset.config
        self.paths = cset.paths
        is_s = np.array([p.demand_class is DemandClass.STRAIGHT for p in self.paths])
        self.groups = []  # (indices, total): last index eliminated
        for mask, total in ((is_s, cset.demand.d_s), (~is_s, cset.demand.d_l)):
            idx = np.flatnonzero(mask)
            if len(idx) and total > 0:
                self.groups.append((idx, total))
        self.opt_traj = optimize_trajectories
        self.fixed_s, self.fixed_c = np.asarray(fixed_s, float), np.asarray(fixed_c, float)
        self.scale_s = cfg.l_e / cfg.delta_t ** np.arange(4, cfg.K_s + 1)
        self.scale_c = 1.0 / cfg.delta_t ** np.arange(4, cfg.K_c + 1)
        if not cset.has_curved:
            self.scale_c = self.scale_c[:0]
        self.n_share = sum(len(idx) - 1 for idx, _ in self.groups)

    def encode(self, d: DecisionVector) -> np.ndarray:
        z = [d.x_p[idx[:-1]] for idx, _ in self.groups]
        if self.opt_traj:
            z += [d.free_s / self.scale_s, d.free_c[: len(self.scale_c)] / self.scale_c]
        return np.concatenate(z) if z else np.zeros(0)

    def decode(self, z: np.ndarray) -> DecisionVector:
        x = np.zeros(len(self.paths))
        k = 0
        for idx, total in self.groups:
            m = len(idx) - 1
            x[idx[:-1]] = z[k:k + m]
            x[idx[-1]] = total - math.fsum(z[k:k + m])
            k += m
        if self.opt_traj:
            ns, nc = len(self.scale_s), len(self.scale_c)
            free_s = z[k:k + ns] * self.scale_s
            free_c = np.zeros(len(self.fixed_c))
            free_c[:nc] = z[k + ns:k + ns + nc] * self.scale_c
        else:
            free_s, free_c = self.fixed_s, self.fixed_c
        return DecisionVector(x, free_s, free_c)

    def evaluate(self, d: DecisionVector):
        cfg = self.cset.config
        ts, tc = straight_trajectory(cfg, d.free_s), curved_trajectory(cfg, d.free_c)
        seg = SegmentMetrics(
            E_s=segment_energy_straight(ts, cfg.drag_coeff, cfg.mass, check=False),
            E_c=segment_energy_curved(tc, cfg.drag_coeff, cfg.mass, cfg.l_e, check=False),
            V_bar_s=mean_square_velocity(ts), V_bar_c=mean_square_velocity(tc))
        asg = Assignment(self.paths, d.x_p)
        f = _flow(asg, seg, cfg)
        P = _power(asg, seg, cfg)
        br = ObjectiveBreakdown.from_terms(self.alpha, f, P)
        margins = np.concatenate([self.cset.share_margins(d.x_p),
                                  list(self.cset.trajectory_margins(ts, tc).values())])
        return seg, br, margins


def _flow(asg: Assignment, seg: SegmentMetrics, cfg) -> float:
    # validation is skipped inside the solver loop: iterates may sit off the simplex bounds
    turn = math.fsum(x * (p.n_s * seg.V_bar_s + seg.V_bar_c) / (p.n_s + 0.5 * math.pi)
                     for p, x in asg.curved())
    return cfg.rho_ent * utilization_factor(cfg) * (seg.V_bar_s * asg.d_s + turn)


def _power(asg: Assignment, seg: SegmentMetrics, cfg) -> float:
    turn = math.fsum(x * (p.n_segments * seg.E_s + seg.E_c - seg.E_s) for p, x in asg.curved())
    return cfg.rho_ent * cfg.v_u * (turn + asg.d_s * (cfg.n_c + 1) * seg.E_s)


def canonical_straight_split(asg: Assignment, cset: ConstraintSet) -> np.ndarray:
    """Deterministic representative among objective-equivalent straight splits.

    Straight traffic fills the leftmost (straight-only) lane first, then the
    remaining lanes from the inside out, each up to its residual entry capacity.
    """
    x = asg.shares.copy()
    straight = [(k, p) for k, p in enumerate(asg.paths) if p.demand_class is DemandClass.STRAIGHT]
    lane_cap = {int(c.name.rsplit("_", 1)[1]): c.bound for c in cset.entry_caps}
    curved_load: dict[int, float] = {}
    for p, share in asg.curved():
        curved_load[p.entry_lane] = curved_load.get(p.entry_lane, 0.0) + float(share)
    remaining = asg.d_s
    for k, p in sorted(straight, key=lambda kp: -kp[1].entry_lane):
        room = lane_cap.get(p.entry_lane, math.inf) - curved_load.get(p.entry_lane, 0.0)
        take = min(max(room, 0.0), remaining)
        x[k] = take
        remaining -= take
    if remaining > 1e-12:
        return asg.shares.copy()
    # put the rounding residue on the first-filled lane so the class total is unchanged
    k0 = max(straight, key=lambda kp: kp[1].entry_lane)[0]
    x[k0] += asg.d_s - math.fsum(x[k] for k, _ in straight)
    return x


def _polish_shares(prob: _Problem, d: DecisionVector) -> DecisionVector:
    """Snap shares onto the affine span of nearly active linear constraints.

    Candidates for several activity thresholds are tried; the best one that
    satisfies every share constraint exactly (to rounding) wins.
    """
    cset = prob.cset
    x = d.x_p
    rows = [(np.eye(len(x))[k], 0.0) for k in range(len(x))]
    rows += [(c.coeffs, c.bound) for c in cset.share_inequalities]
    rows_eq = [(c.coeffs, c.bound) for c in cset.equalities]
    best, best_J = None, -math.inf
    for thresh in (1e-3, 1e-4, 1e-5, 1e-6):
        act = [(a, b) for a, b in rows if abs(float(a @ x) - b) <= thresh]
        A = np.array([a for a, _ in rows_eq + act])
        b = np.array([b for _, b in rows_eq + act])
        corr, *_ = np.linalg.lstsq(A, b - A @ x, rcond=None)
        xn = x + corr
        if np.max(np.abs(A @ xn - b)) > 1e-12 or cset.share_margins(xn).min() < -1e-13:
            continue
        xn = np.where(np.abs(xn) < 1e-15, 0.0, xn)
        dn = DecisionVector(xn, d.free_s, d.free_c)
        J = prob.evaluate(dn)[1].J
        if J > best_J:
            best, best_J = dn, J
    return best if best is not None else d


def _polished(prob: _Problem, inc: _Incumbent) -> DecisionVector:
    """Polished incumbent when the snap costs at most a violation-sized amount of J."""
    d = _polish_shares(prob, inc.decision)
    _, br, margins = prob.evaluate(d)
    if _violation(margins) <= min(inc.viol, FEAS_TOL) and \
            br.J >= inc.J - 10 * FEAS_TOL * max(1.0, abs(inc.J)):
        return d
    return inc.decision


class _Incumbent:
    """Best point so far. Infeasibility never grows; among feasible points J must rise."""

    def __init__(self):
        self.viol, self.J, self.decision = math.inf, -math.inf, None
        self.history: list[Iterate] = []
        self.evaluations = 0

    def offer(self, d: DecisionVector, br: ObjectiveBreakdown, viol: float) -> bool:
        if viol > FEAS_TOL:
            improve = viol < self.viol - 1e-15
        else:
            improve = self.viol > FEAS_TOL or br.J > self.J
        if improve:
            self.viol, self.J, self.decision = viol, br.J, d
            self.history.append(Iterate(br.f_int, br.P_int, br.J, viol))
        return improve


def _violation(margins: np.ndarray) -> float:
    return max(0.0, -float(margins.min())) if len(margins) else 0.0


def _cobyla_stage(prob: _Problem, start: DecisionVector, inc: _Incumbent,
                  budget: int, scale: float) -> tuple[bool, str]:
    z0 = prob.encode(start)
    cache: dict[bytes, tuple] = {}

    def run(z):
        key = np.asarray(z, float).tobytes()
        if key not in cache:
            d = prob.decode(np.asarray(z, float))
            _, br, margins = prob.evaluate(d)
            cache[key] = (br, margins)
            inc.evaluations += 1
            inc.offer(d, br, _violation(margins))
        return cache[key]

    if not len(z0):
        run(z0)
        return True, "no free variables"
    if budget < len(z0) + 2:
        run(z0)
        return False, "evaluation budget exhausted"
    res = minimize(lambda z: -run(z)[0].J / scale, z0, method="COBYLA",
                   constraints=[{"type": "ineq", "fun": lambda z: run(z)[1]}],
                   options={"rhobeg": RHO_BEGIN, "tol": RHO_END, "maxiter": budget})
    return bool(res.success), str(res.message)


def optimize(config: IntersectionConfig, demand: Demand, alpha: float,
             init: DecisionVector | None = None, optimize_trajectories: bool = True,
             scale_objective: bool = True, max_iter: int = MAX_ITER, rounds: int = 3,
             graph: IntersectionGraph | None = None) -> Solution:
    """Maximize ``J = alpha f_int - (1 - alpha) P_int`` over shares and trajectory tails.

    Stages alternate between a share-only solve (trajectories frozen) and a
    joint solve, warm-starting each from the incumbent, until a round brings no
    improvement. ``max_iter`` bounds the total number of evaluations.
    Raises :class:`NotConverged` (carrying the best-effort solution) when no
    point satisfying every constraint within ``FEAS_TOL`` was found.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    config = _config_for(config, demand)
    cset = assemble_constraints(config, demand, graph)
    if init is None:
        init = initial_decision(config, cset.paths, demand)
    inc = _Incumbent()

    def problem(d: DecisionVector, joint: bool) -> _Problem:
        return _Problem(cset, alpha, joint, d.free_s, d.free_c)

    br0 = problem(init, False).evaluate(init)[1]
    scale = max(abs(br0.J), 1.0) if scale_objective else 1.0
    stages = [False, True] if optimize_trajectories else [False]
    ok, message = True, ""
    current = init
    for _ in range(rounds if optimize_trajectories else 1):
        tails = None
        for joint in stages:
            budget = max_iter - inc.evaluations
            prob = problem(current, joint)
            if joint:
                tails = prob.encode(current)[prob.n_share:]
            ok, message = _cobyla_stage(prob, current, inc, budget, scale)
            current = _polished(prob, inc)
        if inc.evaluations >= max_iter or tails is None:
            break
        # unchanged trajectories would only repeat the share stage
        moved = prob.encode(current)[prob.n_share:] - tails
        if not len(moved) or np.max(np.abs(moved)) <= 10 * RHO_END:
            break

    # the reported point is the polished incumbent, not itself part of the solver history
    prob = problem(inc.decision, False)
    d = _polished(prob, inc)
    x_canon = canonical_straight_split(Assignment(cset.paths, d.x_p), cset)
    d_canon = DecisionVector(x_canon, d.free_s, d.free_c)
    seg, br, margins = prob.evaluate(d_canon)
    viol = _violation(margins)
    _, br_d, margins_d = prob.evaluate(d)
    if viol <= max(_violation(margins_d), 1e-13) and br.J >= br_d.J - 1e-12 * max(1.0, abs(br_d.J)):
        d = d_canon
    else:
        seg, br, margins = prob.evaluate(d)
        viol = _violation(margins)
    feasible = viol <= FEAS_TOL
    sol = Solution(d, br, viol, inc.evaluations, bool(ok and feasible), cset.paths, demand,
                   seg, inc.history, message)
    if not feasible:
        raise NotConverged(f"no feasible point within {max_iter} evaluations "
                           f"(max violation {viol:.3g})", sol)
    return sol


def _config_for(config: IntersectionConfig, demand: Demand) -> IntersectionConfig:
    rho = demand.f_int_ent / config.v_u
    if math.isclose(rho, config.rho_ent, rel_tol=1e-14, abs_tol=0.0):
        return config
    return config.replace(rho_ent=rho)


def verify_feasibility(solution: Solution, config: IntersectionConfig,
                       samples: int = 4001) -> dict[str, float]:
    """Re-check a solution by brute-force dense sampling, independent of the solver.

    Returns the worst normalized violation per constraint family (0 = satisfied).
    """
    config = _config_for(config, solution.demand)
    d, paths, dem = solution.decision, solution.paths, solution.demand
    x = d.x_p
    out = {}
    is_s = np.array([p.demand_class is DemandClass.STRAIGHT for p in paths])
    out["simplex"] = max(abs(x[is_s].sum() - dem.d_s), abs(x[~is_s].sum() - dem.d_l))
    out["bounds"] = max(0.0, -x.min(), x.max() - 1.0)
    cap = lane_capacity(config) / dem.f_int_ent if dem.f_int_ent > 0 else math.inf
    worst = 0.0
    for lane in {p.entry_lane for p in paths}:
        worst = max(worst, sum(xi for p, xi in zip(paths, x) if p.entry_lane == lane) - cap)
    for lane in {p.exit_lane for p in paths if not p.demand_class is DemandClass.STRAIGHT}:
        worst = max(worst, sum(xi for p, xi in zip(paths, x)
                               if p.demand_class is DemandClass.LEFT and p.exit_lane == lane) - cap)
    out["capacity"] = max(worst, 0.0)

    dt, le = config.delta_t, config.l_e
    t = np.linspace(0.0, dt, samples)
    caps = config.deriv_caps()
    seat = platoon_spec(config).seat_pitch
    need = config.l_v + config.d_f_min
    tau = seat * dt / le
    kin = 0.0
    profiles = {}
    for kind, tail in (("straight", d.free_s), ("curved", d.free_c)):
        traj = straight_trajectory(config, tail) if kind == "straight" else curved_trajectory(config, tail)
        c = traj.coeffs[::-1]
        vcap = config.v_max if kind == "straight" else config.v_max / le
        v = np.polyval(np.polyder(c, 1), t)
        kin = max(kin, -v.min() / vcap, (v.max() - vcap) / vcap)
        for j, capj in caps[kind].items():
            kin = max(kin, (np.abs(np.polyval(np.polyder(c, j), t)).max() - capj) / capj)
        scale = 1.0 if kind == "straight" else le
        profiles[kind] = (lambda tt, c=c, s=scale: s * np.polyval(c, tt), traj.length)
    out["kinematics"] = max(kin, 0.0)

    def path_pos(chain, tt):
        # arc length along a chain of segment profiles at time tt (seconds since chain start)
        acc = np.zeros_like(tt)
        for k, (fn, length) in enumerate(chain):
            lo = k * dt
            inside = (tt >= lo) & (tt <= lo + dt)
            base = sum(L for _, L in chain[:k])
            acc = np.where(inside, base + fn(np.clip(tt - lo, 0.0, dt)), acc)
        return acc

    chains = [[profiles["straight"]] * 3]
    if any(p.demand_class is DemandClass.LEFT for p in paths):
        chains.append([profiles["straight"], profiles["curved"], profiles["straight"]])
    follow = 0.0
    for chain in chains:
        t0 = np.linspace(0.0, len(chain) * dt - tau, samples * len(chain))
        gap = path_pos(chain, t0 + tau) - path_pos(chain, t0)
        follow = max(follow, (need - gap.min()) / need)
    out["following"] = max(follow, 0.0)
    return out


def _solve_one(args):
    config, demand, alpha, kwargs = args
    try:
        return optimize(config, demand, alpha, **kwargs)
    except (NotConverged, InfeasibleDemand, ValueError) as exc:
        return exc


def _map(tasks, jobs: int):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_solve_one, tasks))
    return [_solve_one(t) for t in tasks]


def pareto_sweep(config: IntersectionConfig, demand: Demand, alphas, jobs: int = 1,
                 **kwargs) -> list[tuple[float, Solution | Exception]]:
    """One solve per weight, sorted by weight; failures are returned in place."""
    alphas = sorted(float(a) for a in alphas)
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {a}")
    results = _map([(config, demand, a, kwargs) for a in alphas], jobs)
    return list(zip(alphas, results))


def nondominated(solutions) -> list[Solution]:
    """Solutions not dominated in (higher flow, lower power)."""
    sols = [s for s in solutions if isinstance(s, Solution)]
    keep = []
    for s in sols:
        dominated = any(
            o.breakdown.f_int >= s.breakdown.f_int and o.breakdown.P_int <= s.breakdown.P_int
            and (o.breakdown.f_int > s.breakdown.f_int or o.breakdown.P_int < s.breakdown.P_int)
            for o in sols)
        if not dominated:
            keep.append(s)
    return keep


@dataclass
class SweepRow:
    value: float
    config: IntersectionConfig
    solution: Solution | None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.solution is not None


def _rows(values, configs, results) -> list[SweepRow]:
    rows = []
    for v, cfg, res in zip(values, configs, results):
        if isinstance(res, Solution):
            rows.append(SweepRow(v, cfg, res))
        else:
            best = res.solution if isinstance(res, NotConverged) else None
            rows.append(SweepRow(v, cfg, None, f"{type(res).__name__}: {res}"))
            if best is not None:
                rows[-1].error += " (best-effort point kept out of the table)"
    return rows


def sweep_guard_band(config: IntersectionConfig, fractions, d_s: float = 0.5,
                     alpha: float = 0.9845, jobs: int = 1, **kwargs) -> list[SweepRow]:
    """Re-optimize for each guard band ``l_g = fraction * l_e``."""
    fractions = [float(f) for f in fractions]
    tasks, configs, early = [], [], {}
    for k, frac in enumerate(fractions):
        if not 0.0 <= frac <= 0.5:
            raise ValueError(f"guard-band fraction {frac} outside [0, 0.5]")
        try:
            cfg = config.replace(l_g=frac * config.l_e)
            max_vehicles_per_platoon(cfg)
        except ValueError as exc:
            early[k] = exc
            cfg = config
        configs.append(cfg)
        tasks.append((cfg, Demand.from_config(cfg, d_s), alpha, kwargs))
    todo = [k for k in range(len(tasks)) if k not in early]
    solved = dict(zip(todo, _map([tasks[k] for k in todo], jobs)))
    results = [early.get(k, solved.get(k)) for k in range(len(tasks))]
    return _rows(fractions, configs, results)


TRAFFIC_LEVELS = {"medium": 0.5, "heavy": 0.95}


def sweep_demand(config: IntersectionConfig, d_s_list, traffic_level: str = "medium",
                 alpha: float = 0.9845, jobs: int = 1, **kwargs) -> list[SweepRow]:
    """Re-optimize for each straight-demand fraction at a fixed fraction of entry capacity."""
    if traffic_level not in TRAFFIC_LEVELS:
        raise ValueError(f"traffic level must be one of {sorted(TRAFFIC_LEVELS)}")
    f_ent = TRAFFIC_LEVELS[traffic_level] * direction_capacity(config)
    cfg = config.replace(rho_ent=f_ent / config.v_u)
    values = [float(v) for v in d_s_list]
    tasks = [(cfg, Demand(v, f_ent), alpha, kwargs) for v in values]
    return _rows(values, [cfg] * len(values), _map(tasks, jobs))


def solution_from_decision(config: IntersectionConfig, demand: Demand, decision: DecisionVector,
                           alpha: float = 0.5) -> Solution:
    """Wrap an arbitrary decision as a (non-optimized) solution, e.g. for replay."""
    config = _config_for(config, demand)
    cset = assemble_constraints(config, demand)
    prob = _Problem(cset, alpha, False, decision.free_s, decision.free_c)
    seg, br, margins = prob.evaluate(decision)
    viol = _violation(margins)
    return Solution(decision, br, viol, 0, viol <= FEAS_TOL, cset.paths, demand, seg,
                    [], "supplied decision")
