"""Intersection graph, path enumeration, platoon geometry and entry flow.

Grid nodes are addressed by integer indices ``(i, j)`` with ``1 <= i, j <= n_c``
at planar position ``(i * l_e, j * l_e)``; the cube spans ``[0, l_c]`` on
both axes, so index 0 and ``n_c + 1`` are the boundary ports where vehicles
enter and leave. Traffic keeps right: northbound (SN) uses the east half of
the columns, westbound (EW) the north half of the rows. Quadrant 1 is the
north-east block where northbound vehicles turn left into westbound rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .config import ConfigError, IntersectionConfig

Node = tuple[int, int]

# movement groups sharing a node's time allocation
K_GROUPS = 2
# spacing option: every second platoon is left empty
SPACING = 1

_QUADRANT_ORIENTATION = {1: "NW", 2: "SW", 3: "SE", 4: "NE"}


class DemandClass(str, Enum):
    STRAIGHT = "straight"
    LEFT = "left"


@dataclass(frozen=True)
class Segment:
    start: Node
    end: Node
    kind: str  # "straight" | "curved"

    @property
    def curved(self) -> bool:
        return self.kind == "curved"


@dataclass(frozen=True)
class IntersectionGraph:
    n_c: int
    l_e: float
    nodes: tuple[Node, ...]
    straight_edges: tuple[tuple[Node, Node], ...]
    curved_edges: dict[int, tuple[tuple[Node, Node], ...]]
    port_edges: tuple[tuple[Node, Node], ...]

    def position(self, node: Node) -> tuple[float, float]:
        return (node[0] * self.l_e, node[1] * self.l_e)

    def edge_list(self) -> str:
        """Plain-text edge dump: ``kind x0 y0 x1 y1 [quadrant orientation]``."""
        rows = []
        for a, b in self.straight_edges:
            rows.append(f"straight {a[0]} {a[1]} {b[0]} {b[1]}")
        for a, b in self.port_edges:
            rows.append(f"port {a[0]} {a[1]} {b[0]} {b[1]}")
        for q, edges in self.curved_edges.items():
            for a, b in edges:
                rows.append(f"curved {a[0]} {a[1]} {b[0]} {b[1]} {q} {_QUADRANT_ORIENTATION[q]}")
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class Path:
    """One route through the intersection for a single demand direction.

    ``entry_lane`` counts from the outermost (rightmost) lane, so lane
    ``n_c/2`` is the leftmost one and carries straight traffic only.
    ``exit_lane`` numbers the receiving lanes of a left turn the same way the
    divergence points are numbered (1 = earliest turn); it is 0 for straight paths.
    """

    path_id: str
    demand_class: DemandClass
    entry_lane: int
    divergence_point: int
    nodes: tuple[Node, ...]
    segments: tuple[Segment, ...]
    quadrant: int = 1

    @property
    def n_s(self) -> int:
        return sum(1 for s in self.segments if not s.curved)

    @property
    def n_curved(self) -> int:
        return sum(1 for s in self.segments if s.curved)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def exit_lane(self) -> int:
        return self.divergence_point

    def length(self, l_e: float) -> float:
        return self.n_s * l_e + self.n_curved * 0.5 * math.pi * l_e

    @property
    def key(self) -> tuple[int, int]:
        return (self.entry_lane, self.divergence_point)


@dataclass(frozen=True)
class PlatoonSpec:
    n_v_max: int
    seat_pitch: float
    platoon_length: float

    def __post_init__(self):
        if self.n_v_max < 1:
            raise ValueError("platoon must hold at least one vehicle")
        if self.n_v_max * self.seat_pitch > self.platoon_length * (1 + 1e-12):
            raise ValueError("seats do not fit inside the platoon")


def build_intersection(config: IntersectionConfig) -> IntersectionGraph:
    """Grid graph of ``n_c x n_c`` virtual nodes plus in-cell diagonal turn edges."""
    n = config.n_c
    if n % 2 or n < 2:
        raise ConfigError(f"n_c must be even, got {n}", key="n_c")
    if config.l_e < config.l_e_min:
        raise ConfigError("edge length below minimum curvature radius", key="l_e_min")
    nodes = tuple((i, j) for j in range(1, n + 1) for i in range(1, n + 1))
    straight = []
    for j in range(1, n + 1):
        for i in range(1, n):
            straight.append(((i, j), (i + 1, j)))
    for i in range(1, n + 1):
        for j in range(1, n):
            straight.append(((i, j), (i, j + 1)))
    ports = []
    for k in range(1, n + 1):
        ports += [((k, 0), (k, 1)), ((k, n), (k, n + 1)),
                  ((0, k), (1, k)), ((n, k), (n + 1, k))]
    h = n // 2
    lo, hi = range(1, h), range(h + 1, n)
    curved = {
        # (cell lower-left corner) -> diagonal oriented per quadrant
        1: tuple(((i + 1, j), (i, j + 1)) for j in hi for i in hi),  # NW
        2: tuple(((i + 1, j + 1), (i, j)) for j in hi for i in lo),  # SW
        3: tuple(((i, j + 1), (i + 1, j)) for j in lo for i in lo),  # SE
        4: tuple(((i, j), (i + 1, j + 1)) for j in lo for i in hi),  # NE
    }
    return IntersectionGraph(n, config.l_e, nodes, tuple(straight), curved, tuple(ports))


def _rotate(node: Node, n: int, times: int) -> Node:
    i, j = node
    for _ in range(times % 4):
        i, j = n + 1 - j, i
    return (i, j)


def _segments(nodes, curved_at=None):
    segs = []
    for k in range(len(nodes) - 1):
        kind = "curved" if k == curved_at else "straight"
        segs.append(Segment(nodes[k], nodes[k + 1], kind))
    return tuple(segs)


def _quadrant1_paths(n: int) -> list[Path]:
    h = n // 2
    paths = []
    for lane in range(1, h + 1):
        c = n + 1 - lane
        nodes = tuple((c, j) for j in range(0, n + 2))
        paths.append(Path(f"S{lane}", DemandClass.STRAIGHT, lane, 0, nodes, _segments(nodes)))
    for lane in range(1, h):
        c = n + 1 - lane
        for d in range(1, h):
            r = h + 1 + d
            north = [(c, j) for j in range(0, r)]          # up to (c, r-1)
            west = [(i, r) for i in range(c - 1, -1, -1)]  # (c-1, r) .. west port
            nodes = tuple(north + west)
            paths.append(Path(f"C{lane}-{d}", DemandClass.LEFT, lane, d, nodes,
                              _segments(nodes, curved_at=len(north) - 1)))
    return paths


def enumerate_paths(graph: IntersectionGraph, quadrant: int = 1) -> list[Path]:
    """Straight paths first (by lane), then curved paths keyed (lane, divergence)."""
    if quadrant not in (1, 2, 3, 4):
        raise ValueError("quadrant must be 1..4")
    n = graph.n_c
    out = []
    for p in _quadrant1_paths(n):
        nodes = tuple(_rotate(v, n, quadrant - 1) for v in p.nodes)
        curved_at = next((k for k, s in enumerate(p.segments) if s.curved), None)
        out.append(Path(p.path_id, p.demand_class, p.entry_lane, p.divergence_point,
                        nodes, _segments(nodes, curved_at), quadrant))
    return out


def max_vehicles_per_platoon(config: IntersectionConfig) -> int:
    pitch = config.l_v + config.d_f_min
    if pitch <= 0:
        raise ValueError("l_v + d_f_min must be positive")
    n = math.floor((config.l_e - config.l_g) / pitch + 1e-9)
    if n < 1:
        raise ValueError(
            f"platoon of length {config.l_e - config.l_g:g} m cannot hold a vehicle")
    return n


def platoon_spec(config: IntersectionConfig) -> PlatoonSpec:
    """Seats spread evenly over the platoon envelope (pitch >= l_v + d_f_min)."""
    n = max_vehicles_per_platoon(config)
    length = config.l_e - config.l_g
    return PlatoonSpec(n, length / n, length)


def seat_position(platoon_start: float, k: int, spec: PlatoonSpec) -> float:
    """Front position of seat ``k`` (1 = rearmost) given the platoon rear ``platoon_start``."""
    if not 1 <= k <= spec.n_v_max:
        raise IndexError(f"seat index {k} outside 1..{spec.n_v_max}")
    return platoon_start + k * spec.seat_pitch


def entry_flow(config: IntersectionConfig, n_v: float) -> float:
    """Per-lane entry flow (veh/s) with ``n_v`` vehicles in every nonempty platoon."""
    if n_v < 0:
        raise ValueError("n_v must be nonnegative")
    if n_v > max_vehicles_per_platoon(config):
        raise ValueError(f"n_v={n_v} exceeds platoon capacity")
    return n_v / (K_GROUPS * (1 + SPACING) * config.delta_t)


def lane_capacity(config: IntersectionConfig) -> float:
    return entry_flow(config, max_vehicles_per_platoon(config))


def direction_capacity(config: IntersectionConfig) -> float:
    """Entry capacity of one demand direction: ``n_c/2`` lanes at full platoons."""
    return config.n_c // 2 * lane_capacity(config)


def direction_entry_flow(config: IntersectionConfig) -> float:
    """Entry flow implied by the entry density at base speed."""
    return config.rho_ent * config.v_u


@dataclass(frozen=True)
class SpacingPattern:
    """Occupancy of platoons over a horizon, per lane of the two merging streams.

    Northbound platoon ``m`` in column ``c`` passes node ``(c, j)`` when its
    slot opens at ``(c + j + 2m) * delta_t``; westbound platoon ``m`` in row
    ``r`` passes ``(i, r)`` at ``(r + 1 - i + 2m) * delta_t``. A northbound
    platoon is nonempty iff ``m = c (mod 2)``, a westbound one iff ``m`` is even.
    A turn from column ``c`` joins westbound platoon ``m + c - 1``.
    """

    n_c: int
    horizon_cycles: int
    enabled: bool = True

    def ns_nonempty(self, column: int, m: int) -> bool:
        return True if not self.enabled else (m - column) % 2 == 0

    def ew_nonempty(self, row: int, m: int) -> bool:
        return True if not self.enabled else m % 2 == 0

    @staticmethod
    def merge_target(column: int, m: int) -> int:
        return m + column - 1

    def schedule(self) -> dict[str, dict[int, list[bool]]]:
        n, h = self.n_c, self.n_c // 2
        slots = range(2 * self.horizon_cycles)
        return {
            "NS": {c: [self.ns_nonempty(c, m) for m in slots] for c in range(h + 1, n + 1)},
            "EW": {r: [self.ew_nonempty(r, m) for m in slots] for r in range(h + 1, n + 1)},
        }


def spacing_pattern(horizon_cycles: int, n_c: int = 6, enabled: bool = True) -> SpacingPattern:
    if horizon_cycles < 1:
        raise ValueError("horizon must cover at least one cycle")
    return SpacingPattern(n_c, horizon_cycles, enabled)
