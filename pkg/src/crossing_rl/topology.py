"""Road geometry: straight ego path, perpendicular crossing paths, collision test."""
from __future__ import annotations

import math
from dataclasses import dataclass

VEHICLE_LENGTH = 4.0
VEHICLE_WIDTH = 2.0
D_CROSS_VALUES = (4.0, 8.0, 12.0, 25.0, 30.0, 40.0)
EGO = -1  # path id of the ego path in frenet_to_world


@dataclass(frozen=True)
class Path:
    """Straight segment starting at ``start`` with direction ``heading``."""

    start: tuple[float, float]
    heading: float
    length: float

    def point(self, p: float) -> tuple[float, float]:
        return (
            self.start[0] + p * math.cos(self.heading),
            self.start[1] + p * math.sin(self.heading),
        )


@dataclass(frozen=True)
class Crossing:
    cross_path_index: int
    p_cross_own: float
    p_cross_ego: float


@dataclass(frozen=True)
class VehicleFrame:
    center: tuple[float, float]
    heading: float
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH

    def corners(self) -> list[tuple[float, float]]:
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = self.length / 2, self.width / 2
        cx, cy = self.center
        return [
            (cx + c * dl - s * dw, cy + s * dl + c * dw)
            for dl, dw in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
        ]


@dataclass(frozen=True)
class PathTopology:
    ego_path: Path
    cross_paths: tuple[Path, ...]
    crossings: tuple[Crossing, ...]
    d_cross: float
    goal_position: float

    def __post_init__(self):
        if not 1 <= len(self.cross_paths) <= 4:
            raise ValueError("a topology has between 1 and 4 crossing paths")
        ego_cross = sorted(c.p_cross_ego for c in self.crossings)
        for c in self.crossings:
            if not 0 < c.p_cross_ego < self.goal_position <= self.ego_path.length:
                raise ValueError(f"crossing at {c.p_cross_ego} m is outside (0, goal)")
            if not 0 <= c.p_cross_own <= self.cross_paths[c.cross_path_index].length:
                raise ValueError("crossing point lies outside its crossing path")
        if len(ego_cross) > 1:
            if self.d_cross not in D_CROSS_VALUES:
                raise ValueError(f"d_cross must be one of {D_CROSS_VALUES}, got {self.d_cross}")
            gaps = [b - a for a, b in zip(ego_cross, ego_cross[1:])]
            if any(abs(gap - self.d_cross) > 1e-9 for gap in gaps):
                raise ValueError("consecutive crossings must be d_cross apart")

    @property
    def n_crossings(self) -> int:
        return len(self.crossings)

    def path(self, path_id: int) -> Path:
        return self.ego_path if path_id == EGO else self.cross_paths[path_id]


def build_topology(
    n_crossings: int = 1,
    d_cross: float = 0.0,
    first_crossing: float = 60.0,
    p_cross_own: float = 60.0,
    cross_tail: float = 30.0,
    goal_margin: float = 30.0,
) -> PathTopology:
    """Single or double crossing layout.

    The ego drives along +x from the origin.  Each crossing gets one
    perpendicular path; the first carries traffic northbound, the second
    southbound.  The goal lies ``goal_margin`` past the last crossing.
    """
    if n_crossings not in (1, 2):
        raise ValueError("n_crossings must be 1 or 2")
    if n_crossings == 1:
        d_cross = 0.0
    xs = [first_crossing + i * d_cross for i in range(n_crossings)]
    goal = xs[-1] + goal_margin
    ego = Path((0.0, 0.0), 0.0, goal + 10.0)
    paths, crossings = [], []
    for i, x in enumerate(xs):
        if i % 2 == 0:
            path = Path((x, -p_cross_own), math.pi / 2, p_cross_own + cross_tail)
        else:
            path = Path((x, p_cross_own), -math.pi / 2, p_cross_own + cross_tail)
        paths.append(path)
        crossings.append(Crossing(i, p_cross_own, x))
    return PathTopology(ego, tuple(paths), tuple(crossings), float(d_cross), goal)


def frenet_to_world(topology: PathTopology, path_id: int, p: float) -> VehicleFrame:
    """Frame of a vehicle centred at arc length ``p`` on a path (``EGO`` or index)."""
    path = topology.path(path_id)
    if not 0.0 <= p <= path.length:
        raise ValueError(f"arc length {p:.3f} outside [0, {path.length:.3f}]")
    return VehicleFrame(path.point(p), path.heading)


def frames_overlap(a: VehicleFrame, b: VehicleFrame) -> bool:
    """Separating-axis test for two oriented rectangles (touching counts)."""
    dx = b.center[0] - a.center[0]
    dy = b.center[1] - a.center[1]
    reach = 0.5 * (math.hypot(a.length, a.width) + math.hypot(b.length, b.width))
    if dx * dx + dy * dy > reach * reach:
        return False
    ca, sa = math.cos(a.heading), math.sin(a.heading)
    cb, sb = math.cos(b.heading), math.sin(b.heading)
    axes_a = ((ca, sa), (-sa, ca))
    axes_b = ((cb, sb), (-sb, cb))
    half_a = (a.length / 2, a.width / 2)
    half_b = (b.length / 2, b.width / 2)
    for ux, uy in axes_a + axes_b:
        ra = half_a[0] * abs(ux * axes_a[0][0] + uy * axes_a[0][1]) + half_a[1] * abs(
            ux * axes_a[1][0] + uy * axes_a[1][1]
        )
        rb = half_b[0] * abs(ux * axes_b[0][0] + uy * axes_b[0][1]) + half_b[1] * abs(
            ux * axes_b[1][0] + uy * axes_b[1][1]
        )
        if abs(dx * ux + dy * uy) > ra + rb + 1e-12:
            return False
    return True
