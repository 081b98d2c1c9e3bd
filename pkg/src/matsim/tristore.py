"""Triangle records owned by robots, and the checks over their union.

Each robot keeps the records of the triangles it owns.  The analysis side
takes the union of all records (a snapshot) to classify edges, build the
dual graph and verify that ownership respects the structure the routing
relies on.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from itertools import combinations

from shapely.geometry import Polygon


class StructureError(RuntimeError):
    """The triangle set is not a triangulation (duplicate or overlapping)."""


def tri_key(a, b, c) -> tuple:
    return tuple(sorted((a, b, c)))


def edge_key(a, b) -> tuple:
    return (a, b) if a < b else (b, a)


def tri_edges(key):
    a, b, c = key
    return ((b, c), (a, c), (a, b))  # edge i is opposite key[i]


@dataclass(frozen=True)
class TriangleRecord:
    key: tuple
    owner: int
    hop: int | None = None
    is_frontier: bool = False
    kind: str = "expansion"          # expansion | discovery | wall
    wall_edges: frozenset = frozenset()
    via: int | None = None
    created: int = 0
    depth: int | None = None         # dual distance from the base triangle

    def __post_init__(self):
        if self.owner not in self.key:
            raise StructureError(f"owner {self.owner} is not a vertex of {self.key}")


@dataclass(frozen=True)
class EdgeClass:
    edge: tuple
    cls: str        # frontier | internal | wall


@dataclass
class DualGraph:
    vertices: list
    edges: list
    adj: dict = field(default_factory=dict)

    def degree(self, key) -> int:
        return len(self.adj.get(key, ()))


def _incidence(records):
    seen = set()
    inc = defaultdict(list)
    for r in records:
        if r.key in seen:
            raise StructureError(f"duplicate triangle {r.key}")
        seen.add(r.key)
        for e in tri_edges(r.key):
            inc[e].append(r.key)
    for e, ts in inc.items():
        if len(ts) > 2:
            raise StructureError(f"edge {e} is shared by {len(ts)} triangles: {ts}")
    return inc


def wall_edge_set(records, extra=()) -> set:
    out = {edge_key(*e) for e in extra}
    for r in records:
        out.update(r.wall_edges)
    return out


def classify_edges(records, wall_edges=()) -> list[EdgeClass]:
    """Frontier / internal / wall class of every triangle edge.

    An edge shared by two triangles is internal; a single-triangle edge is
    a wall edge when flagged as such by its creator, otherwise frontier.
    """
    inc = _incidence(records)
    walls = wall_edge_set(records, wall_edges)
    out = []
    for e in sorted(inc):
        if len(inc[e]) == 2:
            out.append(EdgeClass(e, "internal"))
        else:
            out.append(EdgeClass(e, "wall" if e in walls else "frontier"))
    return out


def frontier_triangles(records, wall_edges=()) -> set:
    front = {c.edge for c in classify_edges(records, wall_edges) if c.cls == "frontier"}
    return {r.key for r in records if any(e in front for e in tri_edges(r.key))}


def extract_dual_graph(records) -> DualGraph:
    inc = _incidence(records)
    adj = {r.key: [] for r in records}
    edges = []
    for e in sorted(inc):
        ts = inc[e]
        if len(ts) == 2:
            a, b = sorted(ts)
            edges.append((a, b))
            adj[a].append(b)
            adj[b].append(a)
    for k in adj:
        adj[k].sort()
    return DualGraph(sorted(adj), edges, adj)


def update_triangle_hop(owned, adjacent_hops: dict, cap: int | None = None) -> list[TriangleRecord]:
    """One synchronous hop update for the triangles a robot owns.

    ``adjacent_hops`` maps triangle key -> (hop, owner) for every triangle
    the robot heard about last round (its own included).  Frontier
    triangles are sources at hop 0; any other triangle takes one more than
    its best known neighbor, ties broken by (hop, owner, key).  A triangle
    with no known neighbor hop keeps its previous value.  A hop above
    ``cap`` becomes unknown, which stops the count upward once no frontier
    is left.
    """
    out = []
    for rec in owned:
        if rec.is_frontier:
            out.append(rec if rec.hop == 0 and rec.via is None else replace(rec, hop=0, via=None))
            continue
        best = None
        for i, e in enumerate(tri_edges(rec.key)):
            opp = rec.key[i]
            for k, (h, owner) in adjacent_hops.items():
                if h is None or k == rec.key or e[0] not in k or e[1] not in k or opp in k:
                    continue
                cand = (h, owner, k, i)
                if best is None or cand < best:
                    best = cand
        if best is None:
            out.append(rec)
            continue
        hop, via = (None, None) if cap is not None and best[0] + 1 > cap else (best[0] + 1, best[3])
        out.append(rec if (rec.hop, rec.via) == (hop, via) else replace(rec, hop=hop, via=via))
    return out


def update_triangle_depth(owned, adjacent_depths: dict, base_edge) -> list[TriangleRecord]:
    """One synchronous update of the distance from the base triangle.

    The triangle holding ``base_edge`` is the source at depth 0; any other
    triangle takes one more than its smallest known neighbor depth and
    keeps its previous value when it knows none.
    """
    a, b = base_edge
    out = []
    for rec in owned:
        if a in rec.key and b in rec.key:
            out.append(rec if rec.depth == 0 else replace(rec, depth=0))
            continue
        best = None
        for i, e in enumerate(tri_edges(rec.key)):
            opp = rec.key[i]
            for k, d in adjacent_depths.items():
                if d is None or k == rec.key or e[0] not in k or e[1] not in k or opp in k:
                    continue
                if best is None or d < best:
                    best = d
        out.append(rec if best is None or best + 1 == rec.depth else replace(rec, depth=best + 1))
    return out


def check_owner_lemma(records, wall_edges=()) -> list[TriangleRecord]:
    """Triangles with a frontier edge whose owner is not on that edge."""
    front = {c.edge for c in classify_edges(records, wall_edges) if c.cls == "frontier"}
    bad = []
    for r in records:
        for e in tri_edges(r.key):
            if e in front and r.owner not in e:
                bad.append(r)
                break
    return bad


def check_owner_connectivity(records, adjacency) -> list[tuple]:
    """Dual edges whose two owners differ and cannot talk directly."""
    owner = {r.key: r.owner for r in records}
    bad = []
    for a, b in extract_dual_graph(records).edges:
        oa, ob = owner[a], owner[b]
        if oa != ob and ob not in adjacency.get(oa, ()):
            bad.append((a, b))
    return bad


def triangle_polygon(key, positions) -> Polygon:
    return Polygon([positions[v] for v in key])


def check_disjoint(records, positions, tol: float = 1e-9) -> list[tuple]:
    """Pairs of triangles whose interiors overlap by more than ``tol`` m^2."""
    polys = [(r.key, triangle_polygon(r.key, positions)) for r in records]
    bad = []
    for (ka, pa), (kb, pb) in combinations(polys, 2):
        if pa.intersects(pb) and pa.intersection(pb).area > tol:
            bad.append((ka, kb))
    return bad
