"""Segment energies, space-average speeds, intersection flow and average power.

All integrals over a segment are done exactly on the polynomial coefficients;
absolute-value integrands are split at the real roots of the integrand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .config import IntersectionConfig
from .core import DemandClass, Path, lane_capacity
from .trajectory import TrajectoryPolynomial, poly_extrema, real_roots_in

SYMMETRIC_DIRECTIONS = 4
_SIMPLEX_TOL = 1e-9


class AssignmentError(ValueError):
    pass


def definite_integral(p: Polynomial, lo: float, hi: float) -> float:
    q = p.integ()
    return float(q(hi) - q(lo))


def abs_integral(p: Polynomial, lo: float, hi: float) -> float:
    """Exact ``int |p(t)| dt`` over ``[lo, hi]``: split at sign changes, integrate each piece."""
    q = p.integ()
    knots = np.concatenate([[lo], real_roots_in(p, lo, hi), [hi]])
    return float(np.sum(np.abs(np.diff(q(knots)))))


def _energy(v: Polynomial, dt: float, drag: float, mass: float) -> float:
    a = v.deriv()
    return drag * abs_integral(v**3, 0.0, dt) + mass * abs_integral(v * a, 0.0, dt)


def _require_forward(traj: TrajectoryPolynomial):
    vmin = poly_extrema(traj.poly.deriv(), 0.0, traj.delta_t)[0]
    if vmin < -1e-9 * traj.l_e / traj.delta_t:
        raise ValueError(f"trajectory moves backwards (min rate {vmin:.3g})")


def segment_energy_straight(traj: TrajectoryPolynomial, drag_coeff: float, mass: float,
                            check: bool = True) -> float:
    """Drag work plus inertial work on a straight segment (J)."""
    if check:
        _require_forward(traj)
    return _energy(traj.poly.deriv(), traj.delta_t, drag_coeff, mass)


def segment_energy_curved(traj: TrajectoryPolynomial, drag_coeff: float, mass: float,
                          l_e: float, check: bool = True) -> float:
    """Tangential work on a quarter-circle segment of radius ``l_e`` (J)."""
    if check:
        _require_forward(traj)
    w = traj.poly.deriv()
    dt = traj.delta_t
    return (drag_coeff * l_e**3 * abs_integral(w**3, 0.0, dt)
            + mass * l_e**2 * abs_integral(w * w.deriv(), 0.0, dt))


def mean_square_velocity(traj: TrajectoryPolynomial) -> float:
    """Space-average speed: ``int v^2 dt`` over the segment's arc length (m/s)."""
    v = traj.arc_poly.deriv()
    return definite_integral(v * v, 0.0, traj.delta_t) / traj.length


@dataclass(frozen=True)
class SegmentMetrics:
    E_s: float
    E_c: float
    V_bar_s: float
    V_bar_c: float


def segment_metrics(straight: TrajectoryPolynomial, curved: TrajectoryPolynomial,
                    config: IntersectionConfig, check: bool = True) -> SegmentMetrics:
    return SegmentMetrics(
        E_s=segment_energy_straight(straight, config.drag_coeff, config.mass, check),
        E_c=segment_energy_curved(curved, config.drag_coeff, config.mass, config.l_e, check),
        V_bar_s=mean_square_velocity(straight),
        V_bar_c=mean_square_velocity(curved),
    )


@dataclass(frozen=True)
class Assignment:
    """Share ``x_p`` of the direction's entry flow routed onto each path."""

    paths: tuple[Path, ...]
    shares: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        shares = np.array(self.shares, dtype=float)
        if shares.shape != (len(self.paths),):
            raise AssignmentError("one share per path required")
        object.__setattr__(self, "shares", shares)

    @property
    def straight_mask(self) -> np.ndarray:
        return np.array([p.demand_class is DemandClass.STRAIGHT for p in self.paths])

    @property
    def d_s(self) -> float:
        return math.fsum(self.shares[self.straight_mask])

    @property
    def d_l(self) -> float:
        return math.fsum(self.shares[~self.straight_mask])

    def curved(self):
        return [(p, x) for p, x in zip(self.paths, self.shares)
                if p.demand_class is DemandClass.LEFT]

    def by_id(self) -> dict[str, float]:
        return {p.path_id: float(x) for p, x in zip(self.paths, self.shares)}

    def lane_totals(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for p, x in zip(self.paths, self.shares):
            out[p.entry_lane] = out.get(p.entry_lane, 0.0) + float(x)
        return out

    def exit_totals(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for p, x in self.curved():
            out[p.exit_lane] = out.get(p.exit_lane, 0.0) + float(x)
        return out

    def validate(self, tol: float = _SIMPLEX_TOL):
        if np.any(self.shares < -tol) or np.any(self.shares > 1 + tol):
            raise AssignmentError("shares must lie in [0, 1]")
        if abs(self.d_s + self.d_l - 1.0) > tol:
            raise AssignmentError(f"shares sum to {self.d_s + self.d_l}, not 1")


def uniform_assignment(paths, d_s: float) -> Assignment:
    paths = tuple(paths)
    straight = [p for p in paths if p.demand_class is DemandClass.STRAIGHT]
    curved = [p for p in paths if p.demand_class is DemandClass.LEFT]
    if not curved and d_s < 1:
        raise AssignmentError("left-turn demand without curved paths")
    shares = [d_s / len(straight) if p.demand_class is DemandClass.STRAIGHT
              else (1 - d_s) / len(curved) for p in paths]
    return Assignment(paths, np.array(shares))


def capacity_violation(assignment: Assignment, config: IntersectionConfig) -> float:
    """Largest excess of any entry-lane or exit-lane share over its cap."""
    f_ent = config.rho_ent * config.v_u
    cap = lane_capacity(config) / f_ent
    totals = list(assignment.lane_totals().values()) + list(assignment.exit_totals().values())
    return max([t - cap for t in totals] + [0.0])


def utilization_factor(config: IntersectionConfig) -> float:
    """Segment utilization times capacity factor, as in the closed-form flow."""
    return 2.0 - (2.0 * config.l_g + config.d_f_min) / config.l_e


def _checked(assignment: Assignment, config, check_capacity: bool):
    assignment.validate()
    if check_capacity and capacity_violation(assignment, config) > _SIMPLEX_TOL:
        raise AssignmentError("assignment exceeds lane capacity")


def intersection_flow(assignment: Assignment, V_bar_s: float, V_bar_c: float,
                      config: IntersectionConfig, check_capacity: bool = False) -> float:
    """Space-average flow of one demand direction (veh/s).

    Independent of how the straight share is split between straight paths.
    """
    _checked(assignment, config, check_capacity)
    turn = math.fsum(x * (p.n_s * V_bar_s + V_bar_c) / (p.n_s + 0.5 * math.pi)
                     for p, x in assignment.curved())
    return config.rho_ent * utilization_factor(config) * (V_bar_s * assignment.d_s + turn)


def intersection_power(assignment: Assignment, E_s: float, E_c: float,
                       config: IntersectionConfig, check_capacity: bool = False) -> float:
    """Average power of one demand direction over a full pattern cycle (W)."""
    _checked(assignment, config, check_capacity)
    turn = math.fsum(x * (p.n_segments * E_s + E_c - E_s) for p, x in assignment.curved())
    return config.rho_ent * config.v_u * (turn + assignment.d_s * (config.n_c + 1) * E_s)


def objective(alpha: float, f_int: float, P_int: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * f_int - (1.0 - alpha) * P_int


@dataclass(frozen=True)
class ObjectiveBreakdown:
    f_int: float
    P_int: float
    J: float
    alpha: float

    @classmethod
    def from_terms(cls, alpha: float, f_int: float, P_int: float) -> ObjectiveBreakdown:
        return cls(f_int, P_int, objective(alpha, f_int, P_int), alpha)

    def whole_intersection(self) -> ObjectiveBreakdown:
        """Totals over the four symmetric demand directions."""
        k = SYMMETRIC_DIRECTIONS
        return ObjectiveBreakdown.from_terms(self.alpha, k * self.f_int, k * self.P_int)

    def to_record(self) -> dict[str, float]:
        return {"f_int": self.f_int, "P_int": self.P_int, "J": self.J, "alpha": self.alpha}


def evaluate(assignment: Assignment, straight: TrajectoryPolynomial, curved: TrajectoryPolynomial,
             config: IntersectionConfig, alpha: float) -> tuple[SegmentMetrics, ObjectiveBreakdown]:
    seg = segment_metrics(straight, curved, config)
    f = intersection_flow(assignment, seg.V_bar_s, seg.V_bar_c, config)
    P = intersection_power(assignment, seg.E_s, seg.E_c, config)
    return seg, ObjectiveBreakdown.from_terms(alpha, f, P)
