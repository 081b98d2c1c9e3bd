"""Polygonal workspace, wall sensing and the unicycle motion model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Point, Polygon

from .geometry import bearing_to, norm_angle, signed_area


class WorkspaceError(ValueError):
    pass


@dataclass(frozen=True)
class RobotSpec:
    diameter: float = 0.1
    r_max: float = 1.0
    bearing_resolution: float = math.pi / 8.0
    wall_sense_range: float = 0.5
    speed: float = 0.2

    def __post_init__(self):
        if self.diameter <= 0 or self.r_max <= 0 or self.speed <= 0:
            raise ValueError("diameter, r_max and speed must be positive")
        if self.wall_sense_range < 0:
            raise ValueError("wall_sense_range must be non-negative")
        if self.bearing_resolution < 0:
            raise ValueError("bearing_resolution must be >= 0 (0 means exact)")

    @property
    def clearance(self) -> float:
        return 0.5 * self.diameter

    @property
    def quantum(self) -> float | None:
        return self.bearing_resolution or None


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


def _ring_area(ring) -> float:
    return 0.5 * sum(ring[i][0] * ring[(i + 1) % len(ring)][1]
                     - ring[(i + 1) % len(ring)][0] * ring[i][1] for i in range(len(ring)))


@dataclass(frozen=True, eq=False)
class WorkspacePolygon:
    """Outer boundary (CCW) with holes (CW) and the base edge, in meters."""

    outer: tuple
    holes: tuple = ()
    base_edge: tuple = ((0.0, 0.0), (0.0, 0.0))
    walls: np.ndarray = field(init=False, repr=False)
    shape: Polygon = field(init=False, repr=False)

    def __post_init__(self):
        outer = tuple(tuple(map(float, p)) for p in self.outer)
        holes = tuple(tuple(tuple(map(float, p)) for p in h) for h in self.holes)
        if len(outer) < 3:
            raise WorkspaceError("outer boundary needs at least 3 vertices")
        if _ring_area(outer) <= 0:
            raise WorkspaceError("outer boundary must be counter-clockwise")
        for h in holes:
            if len(h) < 3 or _ring_area(h) >= 0:
                raise WorkspaceError("holes must be clockwise rings of >= 3 vertices")
        shape = Polygon(outer, holes)
        if not shape.is_valid:
            raise WorkspaceError("workspace polygon is not simple / holes overlap")
        segs = []
        for ring in (outer, *holes):
            for i in range(len(ring)):
                a, b = ring[i], ring[(i + 1) % len(ring)]
                segs.append((a[0], a[1], b[0], b[1]))
        object.__setattr__(self, "outer", outer)
        object.__setattr__(self, "holes", holes)
        object.__setattr__(self, "base_edge", tuple(tuple(map(float, p)) for p in self.base_edge))
        object.__setattr__(self, "walls", np.array(segs, dtype=float))
        object.__setattr__(self, "shape", shape)

    def contains(self, p) -> bool:
        return self.shape.contains(Point(p))

    @property
    def area(self) -> float:
        return self.shape.area

    def vertices(self):
        """(point, is_reflex) for every boundary vertex, reflex w.r.t. free space."""
        out = []
        for ring in (self.outer, *self.holes):
            n = len(ring)
            for i in range(n):
                a, b, c = ring[i - 1], ring[i], ring[(i + 1) % n]
                # free space lies to the left of every ring (CCW outer, CW holes)
                out.append((b, signed_area(a, b, c) < 0))
        return out

    def validate_base_edge(self, spec: RobotSpec):
        a, b = self.base_edge
        for p in (a, b):
            if not self.contains(p):
                raise WorkspaceError(f"base edge endpoint {p} outside free space")
            if distance_to_walls(p, self)[0] < spec.clearance - 1e-9:
                raise WorkspaceError(f"base edge endpoint {p} violates wall clearance")
        length = math.dist(a, b)
        if length > spec.r_max or length <= 0:
            raise WorkspaceError(f"base edge length {length:.3f} not in (0, r_max]")
        if not line_of_sight(a, b, self):
            raise WorkspaceError("base edge endpoints cannot see each other")

    def unexplored_normal(self) -> tuple[float, float]:
        """Unit normal of the base edge pointing into the space to explore.

        The left base robot's right frontier neighbor is the right base
        robot, which puts unexplored space on the left of the directed edge.
        """
        (ax, ay), (bx, by) = self.base_edge
        dx, dy = bx - ax, by - ay
        n = math.hypot(dx, dy)
        return (-dy / n, dx / n)


# -- segment queries --------------------------------------------------------

def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_intersect(p, q, walls: np.ndarray) -> np.ndarray:
    """Closed intersection test of segment pq against every wall segment."""
    ax, ay, bx, by = walls[:, 0], walls[:, 1], walls[:, 2], walls[:, 3]
    px, py = p
    qx, qy = q
    d1 = _orient(ax, ay, bx, by, px, py)
    d2 = _orient(ax, ay, bx, by, qx, qy)
    d3 = _orient(px, py, qx, qy, ax, ay)
    d4 = _orient(px, py, qx, qy, bx, by)
    proper = (d1 * d2 <= 0) & (d3 * d4 <= 0)
    # collinear disjoint segments satisfy the sign test; weed them out
    col = (d1 == 0) & (d2 == 0)
    if np.any(col):
        lo_x = np.minimum(ax, bx) - max(px, qx)
        hi_x = min(px, qx) - np.maximum(ax, bx)
        lo_y = np.minimum(ay, by) - max(py, qy)
        hi_y = min(py, qy) - np.maximum(ay, by)
        overlap = (lo_x <= 0) & (hi_x <= 0) & (lo_y <= 0) & (hi_y <= 0)
        proper = np.where(col, overlap, proper)
    return proper


def line_of_sight(p, q, w: WorkspacePolygon) -> bool:
    return not bool(np.any(segments_intersect(p, q, w.walls)))


def distance_to_walls(p, w: WorkspacePolygon) -> tuple[float, tuple[float, float]]:
    """Distance from p to the nearest wall point, and that point."""
    a = w.walls[:, :2]
    d = w.walls[:, 2:] - a
    pa = np.asarray(p, dtype=float) - a
    t = np.clip(np.einsum("ij,ij->i", pa, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    foot = a + t[:, None] * d
    dist = np.hypot(*(np.asarray(p, dtype=float) - foot).T)
    i = int(np.argmin(dist))
    return float(dist[i]), (float(foot[i, 0]), float(foot[i, 1]))


@dataclass(frozen=True)
class WallReading:
    contact: bool
    near_wall: bool
    wall_bearing: float | None


CONTACT_EPS = 1e-3


def sense_walls(pose: Pose, spec: RobotSpec, w: WorkspacePolygon) -> WallReading:
    """Contact and short-range wall sensing in the robot frame.

    Other robots are invisible to these sensors.
    """
    dist, foot = distance_to_walls(pose.xy, w)
    contact = dist <= spec.clearance + CONTACT_EPS
    near = dist <= spec.wall_sense_range
    bearing = None
    if near or contact:
        bearing = norm_angle(bearing_to(pose.xy, foot) - pose.heading) if dist > 0 else 0.0
    return WallReading(contact, near, bearing)


def _push_out(p, w: WorkspacePolygon, clearance: float):
    x, y = p
    for _ in range(4):
        dist, foot = distance_to_walls((x, y), w)
        if dist >= clearance - 1e-12:
            break
        if dist > 1e-12:
            nx, ny = (x - foot[0]) / dist, (y - foot[1]) / dist
        else:
            nx, ny = 0.0, 0.0
        x, y = foot[0] + nx * clearance, foot[1] + ny * clearance
    return x, y


def integrate_motion(pose: Pose, command, dt: float, spec: RobotSpec,
                     w: WorkspacePolygon) -> Pose:
    """Unicycle update: rotate by turn_rate*dt, then translate forward*dt.

    A translation that would bring the center within ``diameter/2`` of a
    wall is replaced by the closest point on the clearance boundary, which
    makes the robot slide along the wall.
    """
    turn_rate, forward = command
    if dt <= 0:
        raise ValueError("dt must be positive")
    if abs(forward) > spec.speed + 1e-12:
        raise ValueError(f"forward speed {forward} exceeds {spec.speed}")
    heading = norm_angle(pose.heading + turn_rate * dt)
    if forward == 0.0:
        return Pose(pose.x, pose.y, heading)
    step = forward * dt
    if abs(step) >= spec.clearance:
        raise ValueError("step length must stay below the wall clearance")
    x = pose.x + step * math.cos(heading)
    y = pose.y + step * math.sin(heading)
    x, y = _push_out((x, y), w, spec.clearance)
    return Pose(x, y, heading)
