"""Kinematic replay of a solution as seat-based platoons on the rhythmic schedule.

The replay is deliberately built from the schedule and the per-segment
polynomials alone, so that flow, power and separation measured on the trace
independently check the closed-form metrics.

Timing. Northbound platoon ``m`` in column ``c`` opens its slot at node
``(c, j)`` at ``(c + j + 2m) dt``; westbound platoon ``m`` in row ``r`` at node
``(i, r)`` at ``(r + 1 - i + 2m) dt``; southbound ``(c - j + 2m) dt`` and
eastbound ``(i + r + 1 + 2m) dt``. North-south slots at a node therefore
always sit an odd number of beats away from east-west slots. Turning traffic
of the studied direction is replayed in full; the three other directions run
as straight-only background streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree

from .config import IntersectionConfig
from .core import DemandClass, Path, platoon_spec
from .metrics import utilization_factor
from .optimizer import Solution, curved_trajectory, straight_trajectory, verify_feasibility

SAMPLES_PER_BEAT = 64
MIN_CYCLES = 4
_CYCLE_BEATS = 4


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class Route:
    """Node sequence with segment kinds; geometry in metres."""

    route_id: str
    nodes: tuple[tuple[int, int], ...]
    kinds: tuple[str, ...]
    direction: str            # NB | WB | SB | EB, heading at entry
    l_e: float

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.l_e if k == "straight" else 0.5 * math.pi * self.l_e
                         for k in self.kinds])

    @property
    def cum(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lengths)])

    def point(self, s) -> np.ndarray:
        """Planar position at arc length ``s`` (extrapolated straight beyond both ends)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        cum = self.cum
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(self.kinds) - 1)
        u = s - cum[k]
        nodes = np.asarray(self.nodes, dtype=float) * self.l_e
        a, b = nodes[k], nodes[k + 1]
        out = np.empty((len(s), 2))
        straight = np.asarray(self.kinds)[k] == "straight"
        d = (b - a) / self.l_e
        out[straight] = a[straight] + u[straight, None] * d[straight]
        if np.any(~straight):
            kc = k[~straight]
            heading = self._headings[kc]
            left = np.column_stack([-heading[:, 1], heading[:, 0]])
            center = a[~straight] + self.l_e * left
            th = u[~straight] / self.l_e
            rel = a[~straight] - center
            c, sn = np.cos(th), np.sin(th)
            out[~straight] = center + np.column_stack([c * rel[:, 0] - sn * rel[:, 1],
                                                       sn * rel[:, 0] + c * rel[:, 1]])
        return out

    @property
    def _headings(self) -> np.ndarray:
        # heading when entering each segment: direction of the previous segment's chord
        nodes = np.asarray(self.nodes, dtype=float)
        d = np.diff(nodes, axis=0)
        d /= np.linalg.norm(d, axis=1)[:, None]
        return np.vstack([d[:1], d[:-1]])

    def node_heading(self, j: int) -> str:
        """Axis of travel into node ``j`` (out of it for the entry node)."""
        a, b = (self.nodes[j - 1], self.nodes[j]) if j > 0 else (self.nodes[0], self.nodes[1])
        if self.kinds[max(j - 1, 0)] == "curved" and j > 0:
            # a quarter turn arrives heading along the following straight segment
            a, b = self.nodes[j], self.nodes[j + 1]
        return "NS" if a[0] == b[0] else "EW"


def _route_from_path(p: Path, l_e: float) -> Route:
    return Route(p.path_id, p.nodes, tuple(s.kind for s in p.segments), "NB", l_e)


def _straight_route(rid: str, nodes, direction: str, l_e: float) -> Route:
    nodes = tuple(nodes)
    return Route(rid, nodes, ("straight",) * (len(nodes) - 1), direction, l_e)


@dataclass
class Vehicle:
    vid: int
    route: Route
    t_entry: float            # front at the entry node (s)
    platoon: tuple[str, int, int]   # (direction, lane index, platoon index)
    seat: int
    studied: bool             # belongs to the optimized demand direction
    nominal_offset: float     # front distance behind the platoon's front guard edge (m)


def _edge_colouring(edges, colours: int):
    """Proper edge colouring of a bipartite multigraph (alternating-path method).

    ``edges`` are (left, right) pairs; returns one colour in ``0..colours-1``
    per edge so no two edges sharing an endpoint share a colour.
    """
    at: dict[tuple[str, int], dict[int, int]] = {}   # vertex -> colour -> edge index
    colour = [-1] * len(edges)

    def free(v, excl=()):
        used = at.setdefault(v, {})
        for c in range(colours):
            if c not in used and c not in excl:
                return c
        return None

    for e, (u, w) in enumerate(edges):
        U, W = ("L", u), ("R", w)
        a, b = free(U), free(W)
        if a is None or b is None:
            raise SimulationError("vehicle count exceeds seats at a platoon")
        if a not in at[W]:
            b = a
        else:
            # flip the a/b alternating path starting at W so that a becomes free there
            path, v, c_cur = [], W, a
            while c_cur in at.setdefault(v, {}):
                k = at[v][c_cur]
                path.append(k)
                x, y = edges[k]
                v = ("L", x) if v[0] == "R" else ("R", y)
                c_cur = b if c_cur == a else a
            for k in path:
                x, y = edges[k]
                for vv in (("L", x), ("R", y)):
                    at[vv].pop(colour[k], None)
            for k in path:
                colour[k] = b if colour[k] == a else a
                x, y = edges[k]
                for vv in (("L", x), ("R", y)):
                    at[vv][colour[k]] = k
            b = a
        colour[e] = b
        at[U][b] = e
        at[W][b] = e
    return colour


def realize_counts(solution: Solution, config: IntersectionConfig, n_generations: int,
                   vehicles_per_cycle: float) -> list[dict[int, int]]:
    """Integer path counts per generation tracking ``x_p * N`` cumulatively.

    Each vehicle goes to the path with the largest cumulative deficit among
    those whose entry lane and exit row still have a free seat.
    """
    paths = solution.paths
    x = np.clip(solution.decision.x_p, 0.0, None)
    n_max = platoon_spec(config).n_v_max
    assigned = np.zeros(len(paths))
    out = []
    for g in range(n_generations):
        total = round(vehicles_per_cycle * (g + 1)) - round(vehicles_per_cycle * g)
        lane_n: dict[int, int] = {}
        row_n: dict[int, int] = {}
        counts: dict[int, int] = {}
        target = x * vehicles_per_cycle * (g + 1)
        for _ in range(total):
            order = np.argsort(-(target - assigned), kind="stable")
            for k in order:
                p = paths[k]
                if x[k] <= 0 or lane_n.get(p.entry_lane, 0) >= n_max:
                    continue
                if p.demand_class is DemandClass.LEFT and row_n.get(p.exit_lane, 0) >= n_max:
                    continue
                break
            else:
                raise SimulationError("seat capacity exhausted while placing vehicles")
            counts[k] = counts.get(k, 0) + 1
            assigned[k] += 1
            lane_n[p.entry_lane] = lane_n.get(p.entry_lane, 0) + 1
            if p.demand_class is DemandClass.LEFT:
                row_n[p.exit_lane] = row_n.get(p.exit_lane, 0) + 1
        out.append(counts)
    return out


@dataclass
class SimulationTrace:
    config: IntersectionConfig
    dt: float                       # sample step (s)
    horizon_cycles: int
    spacing: bool
    vehicles: list[Vehicle]
    t: np.ndarray                   # per sample: time, vehicle id, arc position, speed, accel
    vid: np.ndarray
    s: np.ndarray
    v: np.ndarray
    a: np.ndarray
    xy: np.ndarray                  # front position
    center: np.ndarray              # body centre (front minus half a vehicle)
    seg: np.ndarray
    events: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return self.horizon_cycles * _CYCLE_BEATS * self.config.delta_t

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicles)

    def samples_table(self) -> str:
        rows = ["t\tvehicle\tpath\ts\tv\ta"]
        for k in range(len(self.t)):
            veh = self.vehicles[self.vid[k]]
            rows.append(f"{self.t[k]:.17g}\t{veh.vid}\t{veh.route.route_id}\t{self.s[k]:.17g}"
                        f"\t{self.v[k]:.17g}\t{self.a[k]:.17g}")
        return "\n".join(rows) + "\n"

    def events_table(self) -> str:
        ev = self.events
        rows = ["node_i\tnode_j\tgroup\tt_front\tt_rear\tvehicle"]
        for k in range(len(ev.get("t_front", []))):
            rows.append(f"{ev['node'][k][0]}\t{ev['node'][k][1]}\t{ev['group'][k]}\t"
                        f"{ev['t_front'][k]:.17g}\t{ev['t_rear'][k]:.17g}\t{ev['vid'][k]}")
        return "\n".join(rows) + "\n"


def _slot_origin(direction: str, lane: int, m: int, n: int) -> int:
    """Beat index at which platoon ``m`` of a lane opens its slot at its entry node."""
    if direction == "NB":
        return lane + 2 * m
    if direction == "WB":
        return lane - n + 2 * m
    if direction == "SB":
        return lane - n - 1 + 2 * m
    return lane + 1 + 2 * m  # EB


def _background_route(direction: str, lane: int, n: int, l_e: float) -> Route:
    rng = range(0, n + 2)
    nodes = {"WB": [(n + 1 - k, lane) for k in rng], "SB": [(lane, n + 1 - k) for k in rng],
             "EB": [(k, lane) for k in rng]}[direction]
    return _straight_route(f"{direction}{lane}", nodes, direction, l_e)


def simulate(solution: Solution, config: IntersectionConfig, horizon_cycles: int = 6,
             spacing: bool = True, background: bool = True,
             entry_flow: float | None = None, background_occupancy: int | None = None,
             check_feasible: bool = True) -> SimulationTrace:
    """Replay ``solution`` for ``horizon_cycles`` full cycles of four beats.

    The intersection is pre-filled so that it is in steady state from ``t = 0``.
    ``entry_flow`` (veh/s) defaults to the solution's demand; ``spacing=False``
    fills every platoon, reproducing the unspaced merge.
    """
    if horizon_cycles < MIN_CYCLES:
        raise SimulationError(f"horizon must cover at least {MIN_CYCLES} cycles")
    if check_feasible:
        worst = max(verify_feasibility(solution, config).values())
        if worst > 1e-6:
            raise SimulationError(f"solution violates its constraints by {worst:.3g}")
    n, h = config.n_c, config.n_c // 2
    dt, l_e, v_u = config.delta_t, config.l_e, config.v_u
    spec = platoon_spec(config)
    f_ent = solution.demand.f_int_ent if entry_flow is None else float(entry_flow)
    per_gen = f_ent * _CYCLE_BEATS * dt
    if per_gen > h * spec.n_v_max + 1e-9:
        raise SimulationError("entry flow exceeds the seat capacity of the entry lanes")
    bg_occ = spec.n_v_max if background_occupancy is None else int(background_occupancy)
    if not 0 <= bg_occ <= spec.n_v_max:
        raise SimulationError("background occupancy exceeds platoon seats")

    horizon = horizon_cycles * _CYCLE_BEATS * dt
    max_segments = 2 * n + 2
    t_lo = -(max_segments + 2) * dt

    def offset(seat: int) -> float:
        return config.l_g / 2 + (spec.n_v_max - seat) * spec.seat_pitch

    vehicles: list[Vehicle] = []

    def add(route, direction, lane, m, seat, studied):
        t0 = _slot_origin(direction, lane, m, n) * dt + offset(seat) / v_u
        if t0 + len(route.kinds) * dt < t_lo or t0 > horizon:
            return
        vehicles.append(Vehicle(len(vehicles), route, t0, (direction, lane, m), seat,
                                studied, offset(seat)))

    # studied direction, one generation at a time
    routes = {k: _route_from_path(p, l_e) for k, p in enumerate(solution.paths)}
    m_hi = int(horizon / dt) // 2 + 2
    m_lo = int(math.floor(t_lo / dt)) // 2 - n - 2
    gens = [M for M in range(m_lo, m_hi + n) if (M % 2 == 1 or not spacing)]
    counts = realize_counts(solution, config, len(gens), per_gen if spacing else per_gen / 2)
    for M, cnt in zip(gens, counts):
        edges, straight = [], []
        for k, c in sorted(cnt.items()):
            p = solution.paths[k]
            col = n + 1 - p.entry_lane
            for _ in range(c):
                if p.demand_class is DemandClass.LEFT:
                    edges.append((col, p.exit_lane, k))
                else:
                    straight.append((col, k))
        colours = _edge_colouring([(u, w) for u, w, _ in edges], spec.n_v_max)
        used: dict[int, set[int]] = {}
        for (col, _, k), c in zip(edges, colours):
            used.setdefault(col, set()).add(c)
            add(routes[k], "NB", col, M - col + 1, c + 1, True)
        for col, k in straight:
            taken = used.setdefault(col, set())
            c = next(c for c in range(spec.n_v_max) if c not in taken)
            taken.add(c)
            add(routes[k], "NB", col, M - col + 1, c + 1, True)

    if background and bg_occ:
        for direction, lanes in (("WB", range(h + 1, n + 1)), ("SB", range(1, h + 1)),
                                 ("EB", range(1, h + 1))):
            for lane in lanes:
                route = _background_route(direction, lane, n, l_e)
                for m in range(m_lo - n, m_hi + n):
                    if spacing and m % 2:
                        continue
                    for seat in range(spec.n_v_max - bg_occ + 1, spec.n_v_max + 1):
                        add(route, direction, lane, m, seat, False)

    return _sample(solution, config, vehicles, horizon_cycles, spacing)


def _motion(route: Route, polys, local: np.ndarray, dt: float):
    """Arc position, speed, acceleration and segment index at times since entry."""
    nseg = len(route.kinds)
    seg = np.clip((local // dt).astype(int), 0, nseg - 1)
    tau = local - seg * dt
    kinds = np.array(route.kinds)[seg]
    s, v, a = (np.empty_like(local) for _ in range(3))
    for kind, (p0, p1, p2) in polys.items():
        sel = kinds == kind
        if np.any(sel):
            s[sel] = route.cum[seg[sel]] + p0(tau[sel])
            v[sel] = p1(tau[sel])
            a[sel] = p2(tau[sel])
    return s, v, a, seg


def _sample(solution, config, vehicles, horizon_cycles, spacing) -> SimulationTrace:
    dt, l_e = config.delta_t, config.l_e
    step = dt / SAMPLES_PER_BEAT
    times = np.arange(horizon_cycles * _CYCLE_BEATS * SAMPLES_PER_BEAT + 1) * step
    ps = straight_trajectory(config, solution.decision.free_s).arc_poly
    pc = curved_trajectory(config, solution.decision.free_c).arc_poly
    polys = {kind: (p, p.deriv(1), p.deriv(2)) for kind, p in (("straight", ps), ("curved", pc))}
    cols = {k: [] for k in ("t", "vid", "s", "v", "a", "xy", "center", "seg")}
    ev = {k: [] for k in ("node", "group", "t_front", "t_rear", "vid")}
    for veh in vehicles:
        r = veh.route
        nseg = len(r.kinds)
        span = nseg * dt
        mask = (times >= veh.t_entry) & (times <= veh.t_entry + span)
        t = times[mask]
        if len(t):
            s, v, a, seg = _motion(r, polys, t - veh.t_entry, dt)
            cols["t"].append(t)
            cols["vid"].append(np.full(len(t), veh.vid))
            cols["s"].append(s)
            cols["v"].append(v)
            cols["a"].append(a)
            cols["xy"].append(r.point(s))
            cols["center"].append(r.point(s - 0.5 * config.l_v))
            cols["seg"].append(seg)
        # node passage of front and rear, from a finer resampling of the same motion
        fine = np.linspace(0.0, span, nseg * SAMPLES_PER_BEAT * 4 + 1)
        sf = np.maximum.accumulate(_motion(r, polys, fine, dt)[0])
        fine = fine + veh.t_entry
        for j in range(1, nseg):
            node = r.nodes[j]
            tf = float(np.interp(r.cum[j], sf, fine))
            tr = float(np.interp(r.cum[j] + config.l_v, sf, fine))
            ev["node"].append(node)
            ev["group"].append(r.node_heading(j))
            ev["t_front"].append(tf)
            ev["t_rear"].append(tr)
            ev["vid"].append(veh.vid)

    def cat(key, shape=(0,)):
        return np.concatenate(cols[key]) if cols[key] else np.zeros(shape)

    events = {"node": ev["node"], "group": np.array(ev["group"]),
              "t_front": np.array(ev["t_front"]), "t_rear": np.array(ev["t_rear"]),
              "vid": np.array(ev["vid"], dtype=int)}
    return SimulationTrace(config, step, horizon_cycles, spacing, vehicles,
                           cat("t"), cat("vid").astype(int), cat("s"), cat("v"), cat("a"),
                           cat("xy", (0, 2)), cat("center", (0, 2)), cat("seg").astype(int),
                           events)


@dataclass
class SeparationReport:
    min_gap: float                    # same-lane front-to-rear gap on straight segments (m)
    gap_pair: tuple | None            # (follower, leader, time)
    min_distance: float               # closest approach of body centres, any two vehicles (m)
    distance_pair: tuple | None
    min_node_offset: float            # NS vs EW occupancy separation at shared nodes (s)
    node_pair: tuple | None           # (vehicle, vehicle, node, time)
    slot_violations: int              # crossings outside their group's beat
    boundary_margin: float            # body distance to its nominal platoon envelope (m)
    monotone: bool
    guard_allowance: float
    d_f_min: float
    l_v: float
    l_g: float
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_record(self) -> dict:
        return {"min_gap": self.min_gap, "min_distance": self.min_distance,
                "min_node_offset": self.min_node_offset, "slot_violations": self.slot_violations,
                "boundary_margin": self.boundary_margin, "monotone": self.monotone,
                "ok": self.ok}


def _window(trace: SimulationTrace):
    # discard the first cycle; measure whole cycles
    dt = trace.config.delta_t
    return _CYCLE_BEATS * dt, trace.duration


def verify_separation(trace: SimulationTrace, config: IntersectionConfig | None = None,
                      guard_allowance: float | None = None, tol: float = 1e-9) -> SeparationReport:
    cfg = config or trace.config
    dt, l_e, l_v = cfg.delta_t, cfg.l_e, cfg.l_v
    guard = cfg.l_g / cfg.v_u if guard_allowance is None else guard_allowance
    veh = trace.vehicles
    tidx = np.rint(trace.t / trace.dt).astype(int)

    # monotone positions
    monotone = True
    if len(trace.s) > 1:
        same = trace.vid[1:] == trace.vid[:-1]
        monotone = bool(np.all(np.diff(trace.s)[same] >= -1e-9))

    # lane line of every sample on a straight segment
    straight = np.zeros(len(trace.t), dtype=bool)
    lane_code = np.zeros(len(trace.t), dtype=np.int64)
    coord = np.zeros(len(trace.t))
    for v in veh:
        sel = np.flatnonzero(trace.vid == v.vid)
        if not len(sel):
            continue
        nodes = np.asarray(v.route.nodes)
        seg = trace.seg[sel]
        a, b = nodes[seg], nodes[seg + 1]
        kind_ok = np.asarray(v.route.kinds)[seg] == "straight"
        vertical = a[:, 0] == b[:, 0]
        sign = np.sign(np.where(vertical, b[:, 1] - a[:, 1], b[:, 0] - a[:, 0]))
        fixed = np.where(vertical, a[:, 0], a[:, 1])
        lane_code[sel] = vertical * 100000 + fixed * 10 + (sign > 0)
        xy = trace.xy[sel]
        coord[sel] = sign * np.where(vertical, xy[:, 1], xy[:, 0])
        straight[sel] = kind_ok

    min_gap, gap_pair = math.inf, None
    k = np.flatnonzero(straight)
    if len(k) > 1:
        order = k[np.lexsort((coord[k], lane_code[k], tidx[k]))]
        same = (tidx[order[1:]] == tidx[order[:-1]]) & (lane_code[order[1:]] == lane_code[order[:-1]])
        gaps = coord[order[1:]] - coord[order[:-1]] - l_v
        if np.any(same):
            j = np.flatnonzero(same)[np.argmin(gaps[same])]
            min_gap = float(gaps[j])
            gap_pair = (int(trace.vid[order[j]]), int(trace.vid[order[j + 1]]),
                        float(trace.t[order[j]]))

    # 2D closest approach of body centres
    min_dist, dist_pair = math.inf, None
    if len(tidx):
        order = np.argsort(tidx, kind="stable")
        bounds = np.flatnonzero(np.diff(tidx[order])) + 1
        for grp in np.split(order, bounds):
            if len(grp) < 2:
                continue
            d, nn = cKDTree(trace.center[grp]).query(trace.center[grp], k=2)
            j = int(np.argmin(d[:, 1]))
            if d[j, 1] < min_dist:
                other = nn[j, 1] if nn[j, 1] != j else nn[j, 0]   # ties at zero distance
                min_dist = float(d[j, 1])
                dist_pair = (int(trace.vid[grp[j]]), int(trace.vid[grp[other]]),
                             float(trace.t[grp[j]]))

    # node occupancy by the two movement groups
    ev, n = trace.events, cfg.n_c
    min_off, node_pair, slot_bad = math.inf, None, 0
    overlap, overlap_pair = math.inf, None   # same-group occupancy gap (merging)
    by_node: dict[tuple, list[int]] = {}
    t0, t1 = 0.0, trace.duration
    for e, node in enumerate(ev.get("node", [])):
        if 1 <= node[0] <= n and 1 <= node[1] <= n and t0 <= ev["t_front"][e] <= t1:
            by_node.setdefault(tuple(node), []).append(e)
            beat = math.floor(ev["t_front"][e] / dt + 1e-9)
            want = (node[0] + node[1] + (ev["group"][e] == "EW")) % 2
            if (beat - want) % 2:
                slot_bad += 1
    for node, idx in by_node.items():
        idx = sorted(idx, key=lambda e: ev["t_front"][e])
        last = {"NS": (-math.inf, None), "EW": (-math.inf, None)}
        for e in idx:
            g = ev["group"][e]
            other = "EW" if g == "NS" else "NS"
            end, who = last[other]
            gap = ev["t_front"][e] - end
            if who is not None and gap < min_off:
                min_off = float(gap)
                node_pair = (int(who), int(ev["vid"][e]), node, float(ev["t_front"][e]))
            end, who = last[g]
            if who is not None and ev["t_front"][e] - end < overlap:
                overlap = float(ev["t_front"][e] - end)
                overlap_pair = (int(who), int(ev["vid"][e]), node, float(ev["t_front"][e]))
            if ev["t_rear"][e] > last[g][0]:
                last[g] = (ev["t_rear"][e], ev["vid"][e])

    # platoon envelope margin on straight segments
    margin = math.inf
    if np.any(straight):
        ent = np.array([v.t_entry for v in veh])
        off = np.array([v.nominal_offset for v in veh])
        j = np.flatnonzero(straight)
        vid = trace.vid[j]
        local = trace.t[j] - ent[vid]
        seg = trace.seg[j]
        cums = [v.route.cum for v in veh]
        base = np.array([cums[i][g] for i, g in zip(vid, seg)])
        dev = trace.s[j] - (base + l_e * (local - seg * dt) / dt)
        front = (off[vid] - cfg.l_g / 2) - dev
        rear = (l_e - cfg.l_g / 2) - (off[vid] + l_v) + dev
        margin = float(min(front.min(), rear.min()))

    out = SeparationReport(min_gap, gap_pair, min_dist, dist_pair, min_off, node_pair,
                           slot_bad, margin, monotone, guard, cfg.d_f_min, l_v, cfg.l_g)
    if not monotone:
        out.violations.append("vehicle moved backwards along its path")
    if min_gap < cfg.d_f_min - tol:
        out.violations.append(f"same-lane gap {min_gap:.6g} m below d_f_min between "
                              f"vehicles {gap_pair[0]} and {gap_pair[1]} at t={gap_pair[2]:.6g} s")
    if min_dist < l_v - tol:
        out.violations.append(f"vehicles {dist_pair[0]} and {dist_pair[1]} overlap "
                              f"(centre distance {min_dist:.6g} m) at t={dist_pair[2]:.6g} s")
    if min_off < guard - tol:
        out.violations.append(f"node conflict at {node_pair[2]}: vehicles {node_pair[0]} and "
                              f"{node_pair[1]} separated by {min_off:.6g} s at t={node_pair[3]:.6g} s")
    if overlap < -tol:
        out.violations.append(f"node conflict at {overlap_pair[2]}: vehicles {overlap_pair[0]} and "
                              f"{overlap_pair[1]} occupy the node together at t={overlap_pair[3]:.6g} s")
        out.node_pair = overlap_pair
    if slot_bad:
        out.violations.append(f"{slot_bad} node crossings outside their group's beat")
    if margin < -cfg.l_g / 2 - tol:
        out.violations.append(f"vehicle leaves its platoon guard band by {-margin - cfg.l_g / 2:.6g} m")
    return out


def _studied_entries(trace: SimulationTrace):
    t_a, t_b = _window(trace)
    if t_b - t_a <= 0:
        raise SimulationError("trace too short for a measurement window")
    return [v for v in trace.vehicles if v.studied and t_a <= v.t_entry < t_b], t_b - t_a


def empirical_entry_flow(trace: SimulationTrace) -> dict[int, float]:
    """Vehicles crossing each entry lane's boundary line per second (lane 1 = outermost)."""
    entries, span = _studied_entries(trace)
    n = trace.config.n_c
    out = {lane: 0.0 for lane in range(1, n // 2 + 1)}
    for v in entries:
        lane = n + 1 - v.route.nodes[0][0]
        out[lane] += 1.0 / span
    return out


def _window_mask(trace: SimulationTrace) -> np.ndarray:
    t_a, t_b = _window(trace)
    studied = np.array([v.studied for v in trace.vehicles], dtype=bool)
    if not len(trace.t):
        return np.zeros(0, dtype=bool)
    return studied[trace.vid] & (trace.t >= t_a) & (trace.t <= t_b)


def empirical_flow(trace: SimulationTrace, config: IntersectionConfig | None = None) -> float:
    """Flow rebuilt from measured motion: entry rate, path mix and space-mean speeds.

    Space-mean speed per segment kind is ``sum v^2 dt / sum v dt`` over all
    samples of the studied direction inside the measurement window.
    """
    cfg = config or trace.config
    entries, span = _studied_entries(trace)
    if not entries:
        return 0.0
    mask = _window_mask(trace)
    kinds = np.empty(len(trace.t), dtype=object)
    for v in trace.vehicles:
        sel = trace.vid == v.vid
        kinds[sel] = np.asarray(v.route.kinds)[trace.seg[sel]]
    speed = {}
    for kind in ("straight", "curved"):
        sel = mask & (kinds == kind)
        vv = trace.v[sel]
        speed[kind] = float(np.sum(vv * vv) / np.sum(vv)) if np.sum(vv) > 0 else 0.0
    f_ent = len(entries) / span
    path_speed = 0.0
    for v in entries:
        n_s = sum(k == "straight" for k in v.route.kinds)
        n_c = len(v.route.kinds) - n_s
        path_speed += (n_s * speed["straight"] + n_c * speed["curved"]) / (n_s + 0.5 * math.pi * n_c)
    path_speed /= len(entries)
    return f_ent / cfg.v_u * utilization_factor(cfg) * path_speed


def empirical_power(trace: SimulationTrace, config: IntersectionConfig | None = None) -> float:
    """Trapezoid integral of ``drag |v|^3 + mass |v a|`` over the window, per second."""
    cfg = config or trace.config
    t_a, t_b = _window(trace)
    if t_b - t_a <= 0:
        raise SimulationError("trace too short for a measurement window")
    mask = _window_mask(trace)
    total = 0.0
    for vid in np.unique(trace.vid[mask]):
        sel = mask & (trace.vid == vid)
        t, v, a = trace.t[sel], trace.v[sel], trace.a[sel]
        if len(t) < 2:
            continue
        total += float(trapezoid(cfg.drag_coeff * np.abs(v) ** 3 + cfg.mass * np.abs(v * a), t))
    return total / (t_b - t_a)
