"""Segment trajectories as polynomials in time since segment entry.

Straight segments carry position ``x(t)`` in metres, curved (quarter-circle,
radius ``l_e``) segments carry the swept angle ``theta(t)`` in radians. The
first four coefficients are fixed by the node-arrival boundary conditions;
only the tail ``c_4 .. c_K`` is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

# uniform samples per segment before stationary-point refinement
GRID_POINTS = 129
_T_TOL = 1e-12


@dataclass(frozen=True)
class TrajectoryPolynomial:
    kind: str  # "straight" | "curved"
    coeffs: np.ndarray
    delta_t: float
    l_e: float

    def __post_init__(self):
        if self.kind not in ("straight", "curved"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    @property
    def free_tail(self) -> np.ndarray:
        return self.coeffs[4:]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coeffs)

    @property
    def arc_poly(self) -> Polynomial:
        """Distance travelled along the segment (m)."""
        return self.poly if self.kind == "straight" else self.l_e * self.poly

    @property
    def length(self) -> float:
        return self.l_e if self.kind == "straight" else 0.5 * math.pi * self.l_e

    def boundary_residuals(self) -> np.ndarray:
        """Relative residuals of the four node-arrival conditions."""
        p, dp = self.poly, self.poly.deriv()
        dt = self.delta_t
        if self.kind == "straight":
            target = (0.0, self.l_e, self.l_e / dt, self.l_e / dt)
            scale = (self.l_e, self.l_e, self.l_e / dt, self.l_e / dt)
        else:
            target = (0.0, 0.5 * math.pi, 1.0 / dt, 1.0 / dt)
            scale = (0.5 * math.pi, 0.5 * math.pi, 1.0 / dt, 1.0 / dt)
        got = (p(0.0), p(dt), dp(0.0), dp(dt))
        return np.abs(np.subtract(got, target)) / np.asarray(scale)


def _tail_sums(tail: np.ndarray, dt: float) -> tuple[float, float]:
    i = np.arange(4, 4 + len(tail))
    return float(np.sum(tail * dt**i)), float(np.sum(i * tail * dt ** (i - 1)))


def _solve_23(rhs0: float, rhs1: float, dt: float) -> tuple[float, float]:
    # c2 dt^2 + c3 dt^3 = rhs0 ;  2 c2 dt + 3 c3 dt^2 = rhs1
    m = np.array([[dt**2, dt**3], [2 * dt, 3 * dt**2]])
    c2, c3 = np.linalg.solve(m, [rhs0, rhs1])
    return float(c2), float(c3)


def eliminate_boundary_straight(free_tail, l_e: float, delta_t: float) -> TrajectoryPolynomial:
    """Straight segment entering at ``x=0`` and leaving at ``x=l_e``, both at base speed."""
    tail = np.asarray(free_tail, dtype=float).ravel()
    r0, r1 = _tail_sums(tail, delta_t)
    a1 = l_e / delta_t
    a2, a3 = _solve_23(l_e - a1 * delta_t - r0, a1 - a1 - r1, delta_t)
    return TrajectoryPolynomial("straight", np.concatenate([[0.0, a1, a2, a3], tail]),
                                delta_t, l_e)


def straight_closed_form(free_tail, delta_t: float) -> tuple[float, float]:
    """Explicit sums for ``(a2, a3)``; agrees with the linear solve."""
    tail = np.asarray(free_tail, dtype=float).ravel()
    i = np.arange(4, 4 + len(tail))
    a2 = float(np.sum((i - 3) * tail * delta_t ** (i - 2)))
    a3 = float(np.sum((2 - i) * tail * delta_t ** (i - 3)))
    return a2, a3


def eliminate_boundary_curved(free_tail, delta_t: float, l_e: float = 1.0) -> TrajectoryPolynomial:
    """Quarter turn: ``theta`` goes 0 -> pi/2 with angular rate ``1/delta_t`` at both ends.

    The cubic part solves the boundary system exactly, giving
    ``b2 = (3*pi/2 - 3)/dt^2`` and ``b3 = (2 - pi)/dt^3`` for an empty tail.
    """
    tail = np.asarray(free_tail, dtype=float).ravel()
    r0, r1 = _tail_sums(tail, delta_t)
    b1 = 1.0 / delta_t
    b2, b3 = _solve_23(0.5 * math.pi - b1 * delta_t - r0, -r1, delta_t)
    return TrajectoryPolynomial("curved", np.concatenate([[0.0, b1, b2, b3], tail]),
                                delta_t, l_e)


def constant_velocity(l_e: float, delta_t: float, degree: int = 3) -> TrajectoryPolynomial:
    return eliminate_boundary_straight(np.zeros(max(degree - 3, 0)), l_e, delta_t)


def _check_time(t, dt: float):
    t = np.asarray(t, dtype=float)
    if np.any(t < -_T_TOL * max(dt, 1.0)) or np.any(t > dt * (1 + _T_TOL) + _T_TOL):
        raise ValueError(f"time outside segment span [0, {dt}]")
    return t


def eval(traj: TrajectoryPolynomial, order: int, t):  # noqa: A001
    """``order``-th time derivative of the segment polynomial at ``t``."""
    if order < 0:
        raise ValueError("derivative order must be >= 0")
    t = _check_time(t, traj.delta_t)
    p = traj.poly.deriv(order) if order else traj.poly
    out = p(t)
    return float(out) if np.ndim(out) == 0 else out


def trim_negligible(p: Polynomial, lo: float, hi: float, rtol: float = 1e-14) -> Polynomial:
    """Drop leading terms whose contribution on ``[lo, hi]`` is below ``rtol`` of the largest.

    A vanishing leading coefficient makes the companion-matrix roots meaningless.
    """
    c = np.asarray(p.coef, dtype=float)
    h = max(abs(lo), abs(hi), 1.0)
    size = np.abs(c) * h ** np.arange(len(c))
    top = size.max() if len(size) else 0.0
    k = len(c)
    while k > 1 and size[k - 1] <= rtol * top:
        k -= 1
    return Polynomial(c[:k])


def real_roots_in(p: Polynomial, lo: float, hi: float) -> np.ndarray:
    """Sorted real roots of ``p`` strictly inside ``(lo, hi)``."""
    p = trim_negligible(p, lo, hi)
    if p.degree() < 1:
        return np.empty(0)
    r = p.roots()
    r = r.real[np.abs(r.imag) <= 1e-9 * (1 + np.abs(r.real))]
    return np.sort(r[(r > lo) & (r < hi)])


def poly_extrema(p: Polynomial, lo: float, hi: float) -> tuple[float, float, float, float]:
    """``(min, argmin, max, argmax)`` of ``p`` on ``[lo, hi]``.

    Dense grid plus the real stationary points inside the interval, so the
    extrema are exact up to root-finding accuracy.
    """
    if hi < lo:
        raise ValueError("empty interval")
    ts = np.linspace(lo, hi, GRID_POINTS)
    if p.degree() >= 2:
        ts = np.concatenate([ts, real_roots_in(p.deriv(), lo, hi)])
    vals = p(ts)
    k_min, k_max = int(np.argmin(vals)), int(np.argmax(vals))
    return float(vals[k_min]), float(ts[k_min]), float(vals[k_max]), float(ts[k_max])


@dataclass(frozen=True)
class KinematicLimits:
    v_max: float
    caps_straight: dict[int, float] = field(default_factory=dict)
    caps_curved: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        for caps in (self.caps_straight, self.caps_curved):
            for j, cap in caps.items():
                if j < 2 or not cap > 0:
                    raise ValueError("derivative caps must be positive and of order >= 2")

    @classmethod
    def from_config(cls, config) -> KinematicLimits:
        caps = config.deriv_caps()
        return cls(config.v_max, caps["straight"], caps["curved"])


@dataclass
class KinematicReport:
    # positive margin = satisfied, in native units of each constraint
    margins: dict[str, float]
    scales: dict[str, float]

    @property
    def violations(self) -> dict[str, float]:
        return {k: max(0.0, -m) for k, m in self.margins.items()}

    @property
    def max_violation(self) -> float:
        return max(self.violations.values(), default=0.0)

    @property
    def feasible(self) -> bool:
        return self.max_violation <= 1e-9

    def normalized(self) -> dict[str, float]:
        return {k: m / self.scales[k] for k, m in self.margins.items()}


def check_kinematics(traj: TrajectoryPolynomial, limits: KinematicLimits) -> KinematicReport:
    dt = traj.delta_t
    p = traj.poly
    if traj.kind == "straight":
        v_cap, caps = limits.v_max, limits.caps_straight
    else:
        v_cap, caps = limits.v_max / traj.l_e, limits.caps_curved
    vmin, _, vmax, _ = poly_extrema(p.deriv(1), 0.0, dt)
    margins = {"v_min": vmin, "v_max": v_cap - vmax}
    scales = {"v_min": v_cap, "v_max": v_cap}
    for j, cap in sorted(caps.items()):
        lo, _, hi, _ = poly_extrema(p.deriv(j), 0.0, dt)
        margins[f"d{j}"] = cap - max(abs(lo), abs(hi))
        scales[f"d{j}"] = cap
    return KinematicReport(margins, scales)


@dataclass
class FollowingReport:
    min_displacement: float
    at_t0: float
    d_f_min: float

    @property
    def margin(self) -> float:
        return self.min_displacement - self.d_f_min

    @property
    def feasible(self) -> bool:
        return self.margin >= -1e-9


def _window_lag(d_f: float, l_e: float, delta_t: float) -> float:
    return d_f / (l_e / delta_t)


def check_following_distance(traj: TrajectoryPolynomial, d_f: float, d_f_min: float,
                             l_e: float, delta_t: float) -> FollowingReport:
    """Minimum distance covered over any window of ``d_f / V_u`` inside the segment.

    Two vehicles entering ``d_f`` apart at base speed stay exactly that time lag
    apart, so this minimum is their closest along-path spacing on the segment.
    Curved segments are measured in arc length ``l_e * theta``.
    """
    if not 0 < d_f <= l_e:
        raise ValueError("d_f must lie in (0, l_e]")
    tau = _window_lag(d_f, l_e, delta_t)
    s = traj.poly if traj.kind == "straight" else l_e * traj.poly
    window = s(Polynomial([tau, 1.0])) - s
    lo, arg, _, _ = poly_extrema(window, 0.0, max(delta_t - tau, 0.0))
    return FollowingReport(lo, arg, d_f_min)


def check_following_across(first: TrajectoryPolynomial, second: TrajectoryPolynomial,
                           d_f: float, d_f_min: float) -> FollowingReport:
    """Same window check for pairs straddling the node between two consecutive segments."""
    l_e, dt = first.l_e, first.delta_t
    tau = _window_lag(d_f, l_e, dt)
    sa, sb = first.arc_poly, second.arc_poly
    # follower at t0 on `first`, leader at t0 + tau - dt on `second`
    window = sb(Polynomial([tau - dt, 1.0])) + (first.length - sa)
    lo, arg, _, _ = poly_extrema(window, dt - tau, dt)
    return FollowingReport(lo, arg, d_f_min)


def sample_table(traj: TrajectoryPolynomial, n: int = 65) -> np.ndarray:
    """Rows of ``(t, position, velocity, acceleration)`` along the segment in SI units."""
    t = np.linspace(0.0, traj.delta_t, n)
    s = traj.arc_poly
    return np.column_stack([t, s(t), s.deriv(1)(t), s.deriv(2)(t)])


evaluate = eval
