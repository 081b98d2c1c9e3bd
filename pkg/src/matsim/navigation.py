"""Offline analysis of a finished triangulation.

Dual-graph BFS and T-greedy routes, the exact shortest-path oracle, the
theoretical stretch constants, the intersection lower bound, coverage
metrics, and a simulated robot that follows the hop gradient.

Everything here works on ground truth (robot positions), never on what
robots sensed.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString, Point, Polygon
from shapely.ops import nearest_points, unary_union
from shapely.prepared import prep

from .geometry import (FatnessParams, bearing_to, fatness, max_gap, measure, point_in_triangle,
                       signed_area, triangle_metrics)
from .tristore import DualGraph, classify_edges, extract_dual_graph, triangle_polygon


class LocationError(ValueError):
    """A point lies outside every triangle (or outside free space)."""


class UnreachableError(ValueError):
    """No path exists between the two points."""


# -- snapshot view -----------------------------------------------------------

@dataclass
class Triangulation:
    """Triangle records plus the ground-truth positions of their vertices."""

    records: list
    positions: dict
    dual: DualGraph = field(init=False)

    def __post_init__(self):
        self.dual = extract_dual_graph(self.records)
        self._by_key = {r.key: r for r in self.records}

    @classmethod
    def from_snapshot(cls, snap: dict) -> "Triangulation":
        from .sim import record_from_dict
        pos = {int(k): tuple(v) for k, v in snap["positions"].items()}
        return cls([record_from_dict(t) for t in snap["triangles"]], pos)

    @classmethod
    def from_world(cls, world) -> "Triangulation":
        return cls(world.records(), world.positions())

    @property
    def keys(self) -> list:
        return self.dual.vertices

    def corners(self, key):
        return tuple(self.positions[v] for v in key)

    def record(self, key):
        return self._by_key[key]

    def fatness(self) -> FatnessParams:
        return fatness([self.corners(r.key) for r in self.records])

    def locate(self, p, eps: float = 1e-12) -> tuple:
        """Key of a (closed) triangle holding ``p``; the smallest key on ties."""
        for key in self.keys:
            a, b, c = self.corners(key)
            if point_in_triangle(p, a, b, c):
                return key
            # points a hair outside an edge still count as on it
            if eps and min(abs(signed_area(p, a, b)), abs(signed_area(p, b, c)),
                           abs(signed_area(p, c, a))) <= eps and \
                    Polygon((a, b, c)).distance(Point(p)) <= 1e-9:
                return key
        raise LocationError(f"point {p} lies outside the triangulation")

    def shared_edge(self, k1, k2) -> tuple:
        e = tuple(sorted(set(k1) & set(k2)))
        if len(e) != 2:
            raise ValueError(f"{k1} and {k2} are not adjacent")
        return e


# -- dual graph routes ----------------------------------------------------------

def dual_bfs(dual: DualGraph, goal) -> dict:
    """Hop distance from ``goal`` to every reachable triangle."""
    if goal not in dual.adj:
        raise KeyError(f"goal {goal} is not a triangle of the dual graph")
    hops = {goal: 0}
    q = deque([goal])
    while q:
        u = q.popleft()
        for v in dual.adj[u]:
            if v not in hops:
                hops[v] = hops[u] + 1
                q.append(v)
    return hops


def dual_route(dual: DualGraph, start, goal) -> list:
    """Shortest dual path start..goal; at each step the smallest key wins."""
    hops = dual_bfs(dual, goal)
    if start not in hops:
        raise UnreachableError(f"{start} and {goal} lie in different components")
    route = [start]
    while route[-1] != goal:
        here = route[-1]
        route.append(min(v for v in dual.adj[here] if hops.get(v) == hops[here] - 1))
    return route


@dataclass(frozen=True)
class GreedyPath:
    """A T-greedy route: straight segments through the dual path's triangles.

    ``waypoints`` is s, the crossing points, then g.  Crossing i lies in
    both ``dual_sequence[i]`` and ``dual_sequence[i + 1]``.
    """

    waypoints: tuple
    dual_sequence: tuple
    length: float

    @property
    def ell(self) -> int:
        """Number of intermediate triangles."""
        return max(0, len(self.dual_sequence) - 2)


WAYPOINT_RULES = ("midpoint", "vertex")


def greedy_path(s, g, tri: Triangulation, waypoint_rule: str = "midpoint") -> GreedyPath:
    """T-greedy path from ``s`` to ``g``.

    ``midpoint`` crosses every shared edge at its midpoint.  ``vertex``
    instead passes through the endpoint of each shared edge that lies
    farther from the previous waypoint, a deliberately bad choice used to
    stress the stretch bound.
    """
    if waypoint_rule not in WAYPOINT_RULES:
        raise ValueError(f"unknown waypoint rule {waypoint_rule!r}")
    ks, kg = tri.locate(s), tri.locate(g)
    route = dual_route(tri.dual, ks, kg)
    pts = [tuple(s)]
    for a, b in zip(route, route[1:]):
        u, v = (tri.positions[x] for x in tri.shared_edge(a, b))
        if waypoint_rule == "midpoint":
            pts.append((0.5 * (u[0] + v[0]), 0.5 * (u[1] + v[1])))
        else:
            pts.append(max((u, v), key=lambda p: (math.dist(p, pts[-1]), p)))
    pts.append(tuple(g))
    length = sum(math.dist(p, q) for p, q in zip(pts, pts[1:]))
    return GreedyPath(tuple(pts), tuple(route), length)


# -- exact shortest path ------------------------------------------------------------

class _Visibility:
    """Segment-in-free-space test against a workspace."""

    def __init__(self, w):
        self.shape = w.shape
        self.prepared = prep(w.shape)

    def sees(self, p, q) -> bool:
        if p == q:
            return self.prepared.covers(Point(p))
        return self.prepared.covers(LineString([p, q]))


def exact_shortest_path(s, g, w) -> float:
    """Euclidean shortest path length from s to g inside the free space.

    Dijkstra over the visibility graph of s, g and the reflex vertices of
    the workspace; a shortest path only ever bends at those.
    """
    vis = _Visibility(w)
    s, g = tuple(map(float, s)), tuple(map(float, g))
    for p in (s, g):
        if not vis.prepared.covers(Point(p)):
            raise LocationError(f"point {p} is outside free space")
    if s == g:
        return 0.0
    if vis.sees(s, g):
        return math.dist(s, g)
    nodes = [s, g] + [p for p, reflex in w.vertices() if reflex]
    n = len(nodes)
    dist = [math.inf] * n
    dist[0] = 0.0
    done = [False] * n
    heap = [(0.0, 0)]
    while heap:
        d, i = heapq.heappop(heap)
        if done[i]:
            continue
        if i == 1:
            return d
        done[i] = True
        for j in range(n):
            if done[j] or j == i:
                continue
            nd = d + math.dist(nodes[i], nodes[j])
            if nd < dist[j] and vis.sees(nodes[i], nodes[j]):
                dist[j] = nd
                heapq.heappush(heap, (nd, j))
    raise UnreachableError(f"no path from {s} to {g}")


# -- theory ----------------------------------------------------------------------------

def stretch_bounds(fat: FatnessParams) -> tuple[float, float]:
    """Route-length constants (c, c') for a (rho, alpha)-fat triangulation."""
    if fat.alpha <= 0:
        raise ValueError("alpha must be positive")
    if fat.rho < 1:
        raise ValueError("rho must be >= 1")
    per = fat.rho / math.sin(fat.alpha / 2.0)
    return math.floor(2.0 * math.pi / fat.alpha) * per, math.floor(6.0 * math.pi / fat.alpha) * per


def line_triangle_chord(tri_pts, p, d) -> float:
    """Length of the intersection of the line {p + t d} with a triangle."""
    lo, hi = -math.inf, math.inf
    a, b, c = tri_pts
    orient = 1.0 if signed_area(a, b, c) > 0 else -1.0
    for u, v in ((a, b), (b, c), (c, a)):
        # inside: orient * cross(v - u, x - u) >= 0
        ex, ey = v[0] - u[0], v[1] - u[1]
        base = orient * (ex * (p[1] - u[1]) - ey * (p[0] - u[0]))
        slope = orient * (ex * d[1] - ey * d[0])
        if abs(slope) < 1e-15:
            if base < 0:
                return 0.0
            continue
        t = -base / slope
        if slope > 0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
    if hi <= lo:
        return 0.0
    return (hi - lo) * math.hypot(*d)


def line_disk_chord(center, radius: float, p, d) -> float:
    """Length of the intersection of the line {p + t d} with a disk."""
    n = math.hypot(*d)
    ux, uy = d[0] / n, d[1] / n
    dist = abs((center[0] - p[0]) * uy - (center[1] - p[1]) * ux)
    if dist >= radius:
        return 0.0
    return 2.0 * math.sqrt(radius * radius - dist * dist)


INTERSECTION_FORMS = ("provable", "wide")


def intersection_threshold(r_min: float, alpha: float, form: str = "provable") -> float:
    """Guaranteed chord length for a line meeting a fat triangle.

    ``wide`` is r_min / (2 sin(alpha/2)), which exceeds the diameter of
    the r_min/2 vertex disks and so cannot hold for lines clipping a
    corner.  ``provable`` is r_min * sin(alpha/2): a line either comes
    within (r_min/2) cos(alpha/2) of a vertex, giving a disk chord of at
    least that length, or cuts two sides of a corner of angle >= alpha at
    least that far out.
    """
    if form == "provable":
        return r_min * math.sin(alpha / 2.0)
    if form == "wide":
        return r_min / (2.0 * math.sin(alpha / 2.0))
    raise ValueError(f"unknown form {form!r}")


def intersection_lower_bound(tri_pts, line, r_min: float, alpha: float,
                             form: str = "provable") -> bool:
    """Does the line cut the triangle, or one of its vertex disks, long enough?

    ``line`` is (point, direction).  The disks have radius r_min/2.
    """
    p, d = line
    t = intersection_threshold(r_min, alpha, form)
    if line_triangle_chord(tri_pts, p, d) >= t - 1e-12:
        return True
    return any(line_disk_chord(v, r_min / 2.0, p, d) >= t - 1e-12 for v in tri_pts)


# -- coverage -------------------------------------------------------------------------

ANGLE_BINS = np.linspace(0.0, math.pi / 3.0, 13)


@dataclass(frozen=True)
class TriangleRow:
    key: tuple
    kind: str
    area: float
    min_angle: float
    maxmin_ratio: float


@dataclass(frozen=True)
class CoverageReport:
    covered_area: float
    coverage_fraction: float
    region_area: float          # triangles plus enclosed pockets
    pocket_area: float
    unexplored_area: float
    rho: float
    alpha: float
    area_ratio: float           # largest over smallest triangle area
    area_ratio_bound: float     # sqrt(3) rho^2 / (2 sin alpha)
    triangles: tuple
    histograms: dict


def area_ratio_bound(fat: FatnessParams) -> float:
    return math.sqrt(3.0) * fat.rho ** 2 / (2.0 * math.sin(fat.alpha))


def _histogram(values, bins) -> dict:
    counts, edges = np.histogram(values, bins=bins)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def _connectors(tri: Triangulation, frontier_edges, w, base_ids) -> list:
    """Segments from the ends of the frontier chains to the nearest wall.

    These close the strip between wall robots and the wall, so the
    explored side of the frontier becomes a bounded region.
    """
    deg = {}
    for a, b in frontier_edges:
        deg[a] = deg.get(a, 0) + 1
        deg[b] = deg.get(b, 0) + 1
    ends = {v for v, k in deg.items() if k == 1} | set(base_ids)
    out = []
    boundary = w.shape.boundary
    for v in sorted(ends):
        if v not in tri.positions:
            continue
        p = Point(tri.positions[v])
        q = nearest_points(p, boundary)[1]
        if p.distance(q) > 1e-12:
            # push a hair past the wall so the cut really closes the strip
            dx, dy = q.x - p.x, q.y - p.y
            n = math.hypot(dx, dy)
            out.append(LineString([p, (q.x + 1e-6 * dx / n, q.y + 1e-6 * dy / n)]))
    return out


def coverage_metrics(tri: Triangulation, w, base_ids=(0, 1)) -> CoverageReport:
    """Covered area and the fraction of the explored region it fills.

    The explored region is the free space cut along the frontier edges,
    the base edge and short connectors from the frontier chain ends to the
    nearest wall.  Leftover pieces that do not touch a frontier edge are
    pockets behind the frontier (counted as uncovered); pieces that touch
    one are unexplored space beyond it.
    """
    rows = []
    for r in tri.records:
        m = triangle_metrics(*tri.corners(r.key))
        rows.append(TriangleRow(r.key, r.kind, m.area, m.min_angle, m.edge_ratio))
    covered = sum(x.area for x in rows)
    fat = tri.fatness()
    classes = classify_edges(tri.records)
    frontier = [c.edge for c in classes if c.cls == "frontier"]
    lines = [LineString([tri.positions[a], tri.positions[b]]) for a, b in frontier]
    base = [b for b in base_ids if b in tri.positions]
    if len(base) == 2:
        lines.append(LineString([tri.positions[base[0]], tri.positions[base[1]]]))
    lines += _connectors(tri, frontier, w, base_ids)
    union = unary_union([triangle_polygon(r.key, tri.positions) for r in tri.records])
    cut = unary_union(lines).buffer(1e-7) if lines else Polygon()
    rest = w.shape.difference(union).difference(cut)
    pieces = list(getattr(rest, "geoms", [rest])) if not rest.is_empty else []
    front = unary_union([LineString([tri.positions[a], tri.positions[b]]) for a, b in frontier]) \
        if frontier else None
    pocket = unexplored = 0.0
    for piece in pieces:
        if piece.area <= 1e-12:
            continue
        if front is not None and piece.distance(front) < 1e-5:
            unexplored += piece.area
        elif len(base) == 2 and piece.distance(LineString([tri.positions[base[0]],
                                                          tri.positions[base[1]]])) < 1e-5 \
                and _beyond_base(piece, tri, base, w):
            # the sliver between the base edge and the doorway wall
            unexplored += piece.area
        else:
            pocket += piece.area
    region = covered + pocket
    areas = [x.area for x in rows]
    ratios = [x.maxmin_ratio for x in rows]
    hist = {
        "area": _histogram(areas, np.linspace(0.0, max(areas), 11)),
        "min_angle": _histogram([x.min_angle for x in rows], ANGLE_BINS),
        "maxmin_ratio": _histogram(ratios, np.linspace(1.0, max(1.0 + 1e-9, max(ratios)), 11)),
    }
    return CoverageReport(covered, covered / region if region > 0 else 0.0, region, pocket,
                          unexplored, fat.rho, fat.alpha, max(areas) / min(areas),
                          area_ratio_bound(fat), tuple(rows), hist)


def _beyond_base(piece, tri, base, w) -> bool:
    """True when the piece lies on the outer side of the base edge."""
    (ax, ay), (bx, by) = (tri.positions[b] for b in base)
    c = piece.representative_point()
    return (bx - ax) * (c.y - ay) - (by - ay) * (c.x - ax) < 0


# -- a robot following the hop gradient -----------------------------------------------

@dataclass(frozen=True)
class NavTrial:
    start: tuple
    goal: tuple
    start_key: tuple
    goal_key: tuple
    hops: int
    d_p: float
    d_pT: float
    trajectory: float
    moves: int
    good_moves: int
    reached: bool

    @property
    def stretch(self) -> float:
        return self.d_pT / self.d_p if self.d_p > 0 else 1.0

    @property
    def trajectory_stretch(self) -> float:
        return self.trajectory / self.d_p if self.d_p > 0 else 1.0


def perceived_triangle(p, heading: float, candidates, tri: Triangulation, hops: dict,
                       resolution: float | None):
    """The triangle a robot at ``p`` believes it is in, from bearings only.

    Among candidates passing the occupancy test the lowest hop wins;
    None when none passes.
    """
    best = None
    for key in candidates:
        bs = [measure(bearing_to(p, tri.positions[v]) - heading, resolution) for v in key]
        if max_gap(bs) <= math.pi + 1e-12:
            cand = (hops.get(key, math.inf), key)
            best = cand if best is None or cand < best else best
    return None if best is None else best[1]


def simulate_navigation(tri: Triangulation, s, g, w, resolution: float | None = None,
                        step: float = 0.01, heading: float = 0.0, max_steps: int = 200000) -> NavTrial:
    """Drive a point robot from s to g along the hop gradient rooted at g's triangle.

    In each triangle it heads for the midpoint of the edge toward the
    neighbor one hop closer (smallest key on ties); in the goal triangle
    it heads straight for g.  Its triangle is re-estimated every step from
    quantized bearings to the current triangle and its dual neighbors.
    A move is counted whenever the estimate changes, and is good when the
    hop count drops by one.
    """
    ks, kg = tri.locate(s), tri.locate(g)
    hops = dual_bfs(tri.dual, kg)
    if ks not in hops:
        raise UnreachableError("start and goal triangles are not connected")
    d_p = exact_shortest_path(s, g, w)
    d_pT = greedy_path(s, g, tri).length
    here = ks
    p = tuple(map(float, s))
    travelled, moves, good = 0.0, 0, 0
    for _ in range(max_steps):
        if here == kg:
            target = tuple(g)
        else:
            nxt = min(v for v in tri.dual.adj[here] if hops.get(v) == hops[here] - 1)
            u, v = (tri.positions[x] for x in tri.shared_edge(here, nxt))
            # aim a little past the midpoint so the edge is actually crossed
            mx, my = 0.5 * (u[0] + v[0]), 0.5 * (u[1] + v[1])
            a, b, c = tri.corners(here)
            cx, cy = (a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0
            target = (mx + 0.05 * (mx - cx), my + 0.05 * (my - cy))
        dist = math.dist(p, target)
        if here == kg and dist <= step:
            travelled += dist
            return NavTrial(tuple(s), tuple(g), ks, kg, hops[ks], d_p, d_pT, travelled, moves, good, True)
        move = min(step, dist)
        if dist > 0:
            p = (p[0] + move * (target[0] - p[0]) / dist, p[1] + move * (target[1] - p[1]) / dist)
            travelled += move
        cands = [here, *tri.dual.adj[here]]
        seen = perceived_triangle(p, heading, cands, tri, hops, resolution)
        if seen is not None and seen != here:
            moves += 1
            if hops.get(seen) == hops[here] - 1:
                good += 1
            here = seen
    return NavTrial(tuple(s), tuple(g), ks, kg, hops[ks], d_p, d_pT, travelled, moves, good, False)


def sample_in_triangle(pts, rng) -> tuple:
    """Uniform point in a triangle, kept a little away from its edges."""
    while True:
        u, v = rng.random(2)
        if u + v > 1.0:
            u, v = 1.0 - u, 1.0 - v
        w_ = 1.0 - u - v
        if min(u, v, w_) >= 0.05:
            a, b, c = pts
            return (a[0] * w_ + b[0] * u + c[0] * v, a[1] * w_ + b[1] * u + c[1] * v)


def pick_trial(tri: Triangulation, rng, separated: bool = True):
    """Random distinct (start, goal) triangles and points inside them.

    With ``separated`` the two triangles share no vertex when the
    triangulation allows it.
    """
    keys = tri.keys
    if len(keys) < 2:
        raise ValueError("navigation needs at least two triangles")
    pairs_ok = separated and any(not set(a) & set(b) for a in keys for b in keys)
    while True:
        i, j = rng.choice(len(keys), size=2, replace=False)
        ks, kg = keys[int(i)], keys[int(j)]
        if pairs_ok and set(ks) & set(kg):
            continue
        s = sample_in_triangle(tri.corners(ks), rng)
        g = sample_in_triangle(tri.corners(kg), rng)
        return ks, kg, s, g


def navigation_correctness(trials) -> float:
    moves = sum(t.moves for t in trials)
    return sum(t.good_moves for t in trials) / moves if moves else 1.0


def run_navigation(tri: Triangulation, w, trials: int, rng, resolution: float | None = None):
    """``trials`` random navigation runs on a connected triangulation."""
    out = []
    for _ in range(trials):
        ks, kg, s, g = pick_trial(tri, rng)
        out.append(simulate_navigation(tri, s, g, w, resolution))
    return out
