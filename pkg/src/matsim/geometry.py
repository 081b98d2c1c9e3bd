"""Angular and planar geometry for bearing-only robots.

Everything a controller may compute lives here as a pure function of
angles.  Angles are plain floats in radians; functions that return an
angle normalize it to [0, 2*pi).  The ground-truth helpers at the bottom
(``signed_area``, ``triangle_metrics``) are for analysis code only.
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Sequence

TWO_PI = 2.0 * math.pi
PI_8 = math.pi / 8.0

DEFAULT_QUALITY_K = 3.0 * math.pi / 4.0
DEGENERATE_AREA = 1e-12


class DegenerateTriangleError(ValueError):
    pass


class UndefinedNeighborError(ValueError):
    pass


def norm_angle(a: float) -> float:
    a = math.fmod(a, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    # fmod of a tiny negative can round up to exactly 2*pi
    if a >= TWO_PI:
        a = 0.0
    return a


def angle_diff(a: float, b: float) -> float:
    """Unsigned angular distance in [0, pi]; symmetric in its arguments."""
    d = norm_angle(a - b)
    return TWO_PI - d if d > math.pi else d


def ccw_angle(a: float, b: float) -> float:
    """Counter-clockwise sweep from direction ``a`` to direction ``b``."""
    return norm_angle(b - a)


def ccw_bisector(a: float, b: float) -> float:
    """Direction halfway along the counter-clockwise sweep from a to b."""
    return norm_angle(a + 0.5 * ccw_angle(a, b))


def mid_direction(a: float, b: float) -> float:
    """Bisector of the smaller angle between two directions."""
    if ccw_angle(a, b) <= math.pi:
        return ccw_bisector(a, b)
    return ccw_bisector(b, a)


@lru_cache(maxsize=64)
def sector_count(resolution: float) -> int:
    if not resolution > 0.0:
        raise ValueError(f"bearing resolution must be positive, got {resolution}")
    k = TWO_PI / resolution
    n = int(round(k))
    if n < 1 or abs(k - n) > 1e-6:
        raise ValueError(f"resolution {resolution} does not divide 2*pi")
    return n


def bearing_sector(exact: float, resolution: float) -> int:
    n = sector_count(resolution)
    return int(math.floor(norm_angle(exact) / (TWO_PI / n))) % n


def sector_center(index: int, resolution: float) -> float:
    n = sector_count(resolution)
    return (index % n + 0.5) * (TWO_PI / n)


def quantize_bearing(exact: float, resolution: float) -> float:
    """Map an angle to the center of the sector that contains it.

    Sector ``i`` covers ``[i*res, (i+1)*res)``; its center is returned, so
    quantizing a center gives the center back.
    """
    return sector_center(bearing_sector(exact, resolution), resolution)


def measure(exact: float, resolution: float | None) -> float:
    """Quantize when a resolution is set, otherwise pass the angle through."""
    if resolution is None or resolution == 0.0:
        return norm_angle(exact)
    return quantize_bearing(exact, resolution)


@dataclass(frozen=True)
class InnerAngles:
    theta_L: float
    theta_R: float


def inner_angles_from_bearings(b_L_to_u: float, b_L_to_R: float,
                               b_R_to_u: float, b_R_to_L: float) -> InnerAngles:
    """Inner angles of triangle (u, L, R) at L and at R.

    Each pair of bearings is measured in the frame of the robot that owns
    it, so only differences within a pair are meaningful.
    """
    return InnerAngles(angle_diff(b_L_to_u, b_L_to_R), angle_diff(b_R_to_u, b_R_to_L))


def max_gap(bearings: Sequence[float]) -> float:
    """Largest circular gap between consecutive bearings."""
    if len(bearings) < 3:
        raise ValueError("occupancy needs bearings to at least three vertices")
    s = sorted(norm_angle(b) for b in bearings)
    gaps = [s[i + 1] - s[i] for i in range(len(s) - 1)]
    gaps.append(TWO_PI - s[-1] + s[0])
    return max(gaps)


def occupancy_test(bearings: Sequence[float]) -> bool:
    """True when the observer is inside the triangle spanned by the vertices.

    The observer is outside exactly when all three vertices fit in an open
    half-plane, i.e. some gap between consecutive bearings exceeds pi.
    """
    return max_gap(bearings) <= math.pi


def frontier_angle(b_left: float | None, b_right: float | None,
                   normal_side: str = "unexplored") -> tuple[float, float]:
    """Frontier angle and frontier normal at a frontier robot.

    The unexplored side is the counter-clockwise sweep from the right
    frontier neighbor to the left one.  Returns ``(theta_F, normal)`` where
    the normal bisects the requested sweep.
    """
    if b_left is None or b_right is None:
        raise UndefinedNeighborError("both frontier neighbors must be set")
    if normal_side == "unexplored":
        start, sweep = b_right, ccw_angle(b_right, b_left)
    elif normal_side == "explored":
        start, sweep = b_left, ccw_angle(b_left, b_right)
    else:
        raise ValueError(f"unknown side {normal_side!r}")
    # coincident bearings: the whole circle lies on the unexplored side
    if sweep == 0.0 and normal_side == "unexplored":
        sweep = TWO_PI
    return sweep, norm_angle(start + 0.5 * sweep)


def triangle_quality(theta_F: float, k: float = DEFAULT_QUALITY_K) -> bool:
    return theta_F < k


# -- ground-truth helpers (analysis side) ---------------------------------

def signed_area(p, q, r) -> float:
    return 0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))


def point_in_triangle(p, a, b, c) -> bool:
    """Closed point-in-triangle test by signs of sub-triangle areas."""
    d1 = signed_area(p, a, b)
    d2 = signed_area(p, b, c)
    d3 = signed_area(p, c, a)
    has_neg = d1 < 0 or d2 < 0 or d3 < 0
    has_pos = d1 > 0 or d2 > 0 or d3 > 0
    return not (has_neg and has_pos)


def bearing_to(p, q) -> float:
    return norm_angle(math.atan2(q[1] - p[1], q[0] - p[0]))


@dataclass(frozen=True)
class TriangleMetrics:
    min_angle: float
    edge_ratio: float
    area: float
    max_angle: float = 0.0
    min_edge: float = 0.0
    max_edge: float = 0.0


def triangle_metrics(p1, p2, p3) -> TriangleMetrics:
    area = abs(signed_area(p1, p2, p3))
    if area < DEGENERATE_AREA:
        raise DegenerateTriangleError(f"triangle {p1}, {p2}, {p3} has area {area}")
    a = math.dist(p2, p3)
    b = math.dist(p1, p3)
    c = math.dist(p1, p2)
    angles = []
    for opp, s1, s2 in ((a, b, c), (b, a, c), (c, a, b)):
        cosv = (s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)
        angles.append(math.acos(max(-1.0, min(1.0, cosv))))
    edges = (a, b, c)
    return TriangleMetrics(min(angles), max(edges) / min(edges), area,
                           max(angles), min(edges), max(edges))


@dataclass(frozen=True)
class FatnessParams:
    rho: float
    alpha: float

    def __post_init__(self):
        if self.rho < 1.0:
            raise ValueError(f"rho must be >= 1, got {self.rho}")
        if not 0.0 < self.alpha <= math.pi / 3.0 + 1e-12:
            raise ValueError(f"alpha must lie in (0, pi/3], got {self.alpha}")


def fatness(triangles) -> FatnessParams:
    """Global (rho, alpha) of a set of ground-truth triangles.

    rho is longest over shortest edge across the whole set, alpha the
    smallest interior angle.
    """
    lo, hi, alpha = math.inf, 0.0, math.inf
    for p1, p2, p3 in triangles:
        m = triangle_metrics(p1, p2, p3)
        lo = min(lo, m.min_edge)
        hi = max(hi, m.max_edge)
        alpha = min(alpha, m.min_angle)
    if alpha is math.inf:
        raise ValueError("fatness of an empty triangulation is undefined")
    return FatnessParams(hi / lo, alpha)
