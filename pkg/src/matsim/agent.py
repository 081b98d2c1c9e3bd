"""The per-robot triangulation controller.

``step`` is a pure function of the robot's previous state, the messages
its neighbors broadcast last round, and what it senses now (quantized
bearings and wall sensors).  It returns the new state, the message to
broadcast and a motion request in the robot's own frame.

Frontier neighbors follow one orientation everywhere: a frontier robot
facing unexplored space has its left neighbor ``L`` on its left and its
right neighbor ``R`` on its right, so the unexplored sweep at the robot
runs counter-clockwise from ``R`` to ``L``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

from .comms import MAX_DEGREE, MAX_DISCONNECT, MAX_OWNED, HopEntry, NeighborView, RoundMessage
from .geometry import (DEFAULT_QUALITY_K, InnerAngles, angle_diff, ccw_angle, ccw_bisector,
                       frontier_angle, max_gap, mid_direction, norm_angle, triangle_quality)
from .tristore import (TriangleRecord, edge_key, tri_edges, tri_key, update_triangle_depth,
                       update_triangle_hop)

log = logging.getLogger(__name__)

NAV = "NavInternal"
EXPAND = "ExpandTriangle"
WALL = "WallFollow"
FRONTIER = "Frontier"
FRONTIER_WALL = "FrontierWall"
INTERNAL = "Internal"

MOVING = (NAV, EXPAND, WALL)
BASE_IDS = (0, 1)

# forward transitions of the controller, plus recovery edges back to NavInternal
LEGAL_TRANSITIONS = {
    (NAV, EXPAND), (EXPAND, FRONTIER), (EXPAND, WALL), (WALL, FRONTIER_WALL),
    (FRONTIER, INTERNAL), (FRONTIER_WALL, INTERNAL),
}
RECOVERY_TRANSITIONS = {(EXPAND, NAV), (WALL, NAV)}

GOAL_ANGLE = math.pi / 3.0
# below this frontier angle an expansion next to the robot would not fit;
# the wedge is closed instead when a navigator comes to expand there
INSIDE_MARGIN = math.pi / 8.0
SHARP_ANGLE = 5.0 * math.pi / 12.0


@dataclass(frozen=True)
class AgentParams:
    quality_k: float = DEFAULT_QUALITY_K
    goal_tol: float = math.pi / 16.0
    wall_timeout: int = 150
    backoff_ticks: int = 40
    hop_cap: int | None = None      # set from the message format by the simulator


@dataclass(frozen=True)
class Motion:
    heading: float | None = None    # robot frame
    speed: float = 0.0              # fraction of top speed
    arrived: bool = False


STOP = Motion()


@dataclass(frozen=True)
class AgentState:
    id: int
    fsm: str
    L: int | None = None
    R: int | None = None
    owned: tuple = ()
    crossed: bool = False
    touched_wall: bool = False
    timer: int = 0
    backing: int = 0
    behind: int = 0                 # wall-follow ticks spent back behind the edge
    layer: int | None = None        # depth being built, read at the base triangle
    retreat: bool = False           # heading back to the base triangle to re-read it
    avoid: tuple = ()               # edges found impassable since injection

    @property
    def fnbrs(self):
        return (self.L, self.R)


def base_state(i: int) -> AgentState:
    """The two base robots start as wall robots marking the base edge."""
    if i == 0:
        return AgentState(0, FRONTIER_WALL, None, 1, touched_wall=True)
    return AgentState(1, FRONTIER_WALL, 0, None, touched_wall=True)


def navigator_state(i: int) -> AgentState:
    return AgentState(i, NAV)


# -- message assembly --------------------------------------------------------

def _angle_table(state: AgentState, view: NeighborView, inbox) -> tuple:
    nbrs = view.neighbors
    if len(nbrs) > MAX_DEGREE:
        verts = {v for r in state.owned for v in r.key}

        def rank(n):
            m = inbox.get(n)
            moving = m is not None and m.state in MOVING
            return (not moving, n not in state.fnbrs, n not in verts, n)

        nbrs = sorted(sorted(nbrs, key=rank)[:MAX_DEGREE])
    return tuple((n, view.bearings[n]) for n in nbrs)


def _message(state: AgentState, view: NeighborView, inbox, **extra) -> RoundMessage:
    hops = tuple(HopEntry(r.key, r.hop, r.is_frontier, r.via, r.depth) for r in state.owned[:MAX_OWNED])
    return RoundMessage(state.id, state.fsm, _angle_table(state, view, inbox), hops,
                        state.fnbrs, **extra)


def _transition(state: AgentState, fsm: str, **kw) -> AgentState:
    if fsm != state.fsm:
        kw.setdefault("timer", 0)
    else:
        kw.setdefault("timer", state.timer + 1)
    return replace(state, fsm=fsm, **kw)


def _inner_angles(me: int, L: int, R: int, inbox) -> InnerAngles | None:
    mL, mR = inbox.get(L), inbox.get(R)
    if mL is None or mR is None:
        return None
    tl = dict(mL.angle_table)
    tr = dict(mR.angle_table)
    if me not in tl or R not in tl or me not in tr or L not in tr:
        return None
    return InnerAngles(angle_diff(tl[me], tl[R]), angle_diff(tr[me], tr[L]))


# -- controllers ---------------------------------------------------------------

def region(theta: InnerAngles, tol: float) -> int:
    """Controller region: 1 beyond an endpoint, 2 balanced and close to the
    edge, 3 unbalanced, 4 goal."""
    tL, tR = theta.theta_L, theta.theta_R
    if abs(tL - GOAL_ANGLE) <= tol and abs(tR - GOAL_ANGLE) <= tol:
        return 4
    if max(tL, tR) >= math.pi / 2:
        return 1
    if abs(tL - tR) <= tol and tL < GOAL_ANGLE - tol:
        return 2
    return 3


def expansion_controller(theta: InnerAngles, b_L: float, b_R: float,
                         tol: float = math.pi / 16.0) -> Motion:
    """Drive toward the equilateral point beyond edge (L, R) using angles only.

    Moving along the ray from L keeps the angle at L fixed while the angle
    at R grows (away from L) or shrinks (toward L), and symmetrically for
    R.  The controller fixes the smaller inner angle first, then the other
    one, so it never re-crosses the edge.
    """
    if angle_diff(b_L, b_R) < GOAL_ANGLE - 2.0 * tol:
        # apex too sharp: we overshot, head back toward the edge
        return Motion(mid_direction(b_L, b_R), 1.0)
    tL, tR = theta.theta_L, theta.theta_R
    reg = region(theta, tol)
    if reg == 4:
        return Motion(None, 0.0, True)
    if reg == 1:
        # beyond an endpoint: orbit it, turning toward the other endpoint
        pivot, other = (b_L, b_R) if tL >= tR else (b_R, b_L)
        tangents = (norm_angle(pivot + math.pi / 2), norm_angle(pivot - math.pi / 2))
        return Motion(min(tangents, key=lambda t: angle_diff(t, other)), 1.0)
    if reg == 2:
        return Motion(mid_direction(b_L + math.pi, b_R + math.pi), 1.0)
    eL, eR = tL - GOAL_ANGLE, tR - GOAL_ANGLE
    if tL > tR:
        if abs(eR) > tol:
            h = b_L + math.pi if eR < 0 else b_L
        else:
            h = b_R + math.pi if eL < 0 else b_R
    else:
        if abs(eL) > tol:
            h = b_R + math.pi if eL < 0 else b_R
        else:
            h = b_L + math.pi if eR < 0 else b_L
    return Motion(norm_angle(h), 1.0)


def _outward(b_L: float, b_R: float) -> float:
    # ccw sweep from R to L contains the unexplored side of edge (L, R)
    return ccw_bisector(b_R, b_L)


def circular_mean(angles) -> float:
    x = sum(math.cos(a) for a in angles)
    y = sum(math.sin(a) for a in angles)
    return norm_angle(math.atan2(y, x))


# -- NavInternal -------------------------------------------------------------------

def _heard_triangles(inbox):
    out = []
    for sender in sorted(inbox):
        for e in inbox[sender].hop_table:
            out.append((e, sender))
    return out


def _is_only_base_edge(view: NeighborView, inbox) -> bool:
    if any(m.hop_table for m in inbox.values()):
        return False
    b0, b1 = BASE_IDS
    if b0 not in view.bearings or b1 not in view.bearings:
        return False
    m0 = inbox.get(b0)
    return m0 is not None and m0.fnbrs[1] == b1


def current_triangle(view: NeighborView, inbox, slack: float = 0.0, by_depth: bool = False):
    """Triangle containing the robot among those its neighbors announced.

    Returns ``(entry, owner)`` or None.  When no triangle passes the
    occupancy test, the one that fails it by the smallest margin (at most
    ``slack``) is used instead.  Ties on a shared edge go to the lower hop,
    or to the lower depth with ``by_depth``.
    """
    inside, near = [], []
    for e, owner in _heard_triangles(inbox):
        if not all(v in view.bearings for v in e.key):
            continue
        gap = max_gap([view.bearings[v] for v in e.key])
        field = e.depth if by_depth else e.hop
        rank = (field is None, field if field is not None else 0, owner, e.key)
        if gap <= math.pi:
            inside.append((rank, e, owner))
        elif gap <= math.pi + slack:
            near.append((gap, rank, e, owner))
    if inside:
        _, e, owner = min(inside)
        return e, owner
    if near:
        _, _, e, owner = min(near)
        return e, owner
    return None


def _frontier_edge(entry: HopEntry, owner: int, inbox, claimed, avoid=()):
    m = inbox.get(owner)
    if m is None:
        return None
    edges = []
    for x in m.fnbrs:
        e = None if x is None else edge_key(owner, x)
        if e is not None and x in entry.key and e not in claimed and e not in avoid:
            edges.append(e)
    for a, b in sorted(edges):
        ma, mb = inbox.get(a), inbox.get(b)
        if ma is not None and ma.fnbrs[1] == b:
            return a, b
        if mb is not None and mb.fnbrs[1] == a:
            return b, a
    return None


def _claims(inbox):
    return {edge_key(*m.claim) for m in inbox.values() if m.claim}


def _toward_base(entry: HopEntry, view: NeighborView, inbox):
    """Heading across the edge to a neighbor triangle closer to the base."""
    best = None
    for e, _ in _heard_triangles(inbox):
        if e.depth is None or entry.depth is None or e.depth >= entry.depth:
            continue
        shared = [v for v in e.key if v in entry.key]
        if len(shared) == 2 and all(v in view.bearings for v in shared):
            cand = (e.depth, e.key, shared)
            best = cand if best is None or cand < best else best
    if best is None:
        return None
    a, b = best[2]
    return mid_direction(view.bearings[a], view.bearings[b])


def step_nav_internal(state: AgentState, view: NeighborView, inbox, params: AgentParams):
    """Descend the hop gradient to the shallowest frontier triangle.

    The layer under construction is the hop count of the base triangle.  A
    navigator that finds itself at a deeper frontier triangle (after its
    edge was blocked or filled) walks back to the base triangle first, so
    triangles keep being added in breadth-first order.
    """
    slack = 0.0
    if view.bearings:
        slack = math.pi / 8.0
    if _is_only_base_edge(view, inbox):
        b0, b1 = BASE_IDS
        nxt = _transition(state, EXPAND, L=b0, R=b1, crossed=False)
        return nxt, _message(nxt, view, inbox), STOP
    found = current_triangle(view, inbox, slack, by_depth=state.retreat)
    if found is None:
        nxt = _transition(state, NAV)
        # lost: drift back toward the robots that own triangles, else hold
        owners = [view.bearings[n] for n in sorted(inbox) if inbox[n].hop_table and n in view.bearings]
        if not owners:
            return nxt, _message(nxt, view, inbox), STOP
        return nxt, _message(nxt, view, inbox), Motion(circular_mean(owners), 1.0)
    entry, owner = found
    layer, retreat = state.layer, state.retreat
    if entry.depth == 0 and entry.hop is not None:
        layer, retreat = entry.hop, False
    too_deep = layer is not None and entry.depth is not None and entry.depth > layer
    if entry.frontier and too_deep:
        retreat = True
    if retreat:
        heading = _toward_base(entry, view, inbox)
        if heading is not None:
            nxt = _transition(state, NAV, layer=layer, retreat=True)
            return nxt, _message(nxt, view, inbox), Motion(heading, 1.0)
        retreat = False
    if entry.frontier and not too_deep:
        fe = _frontier_edge(entry, owner, inbox, _claims(inbox), state.avoid)
        if fe is not None and all(v in view.bearings for v in fe):
            nxt = _transition(state, EXPAND, L=fe[0], R=fe[1], crossed=False, layer=layer)
            return nxt, _message(nxt, view, inbox), STOP
    nxt = _transition(state, NAV, layer=layer, retreat=retreat)
    if entry.via is None:
        return nxt, _message(nxt, view, inbox), STOP
    a, b = tri_edges(entry.key)[entry.via]
    heading = mid_direction(view.bearings[a], view.bearings[b])
    return nxt, _message(nxt, view, inbox), Motion(heading, 1.0)


# -- ExpandTriangle ------------------------------------------------------------------

def _depth_of(inbox, a, b, skip=()):
    """Announced depth of a triangle on edge {a, b}, None when unheard."""
    for n in (a, b):
        m = inbox.get(n)
        if m is None:
            continue
        for e in m.hop_table:
            if a in e.key and b in e.key and not set(e.key) & set(skip):
                return e.depth
    return None


def discover_triangles(me: int, view: NeighborView, inbox, side: str, start: int,
                       k: float, budget: int, exclude=(), created: int = 0,
                       layer: int | None = None):
    """Scan one side of a fresh expansion triangle for discovery triangles.

    Walks the frontier away from ``start`` (the robot's frontier neighbor on
    that side).  Each frontier edge {l_i, l_{i-1}} whose far end is in range
    forms a candidate (me, l_i, l_{i-1}); the candidate is kept when the
    frontier angle it leaves at l_{i-1} is below ``k``.  The scan stops at
    the first rejection.  When ``layer`` (depth of the triangle that was
    expanded) is given, a candidate that would sit two layers out is
    deferred: a later expansion covers it, or a wedge closure when sharp.
    Returns (records, new frontier neighbor, disconnected robots).
    """
    found, dropped = [], []
    prev = start
    seen = set(exclude) | {me, start}
    while len(dropped) < budget:
        m = inbox.get(prev)
        if m is None:
            break
        nxt = m.fnbrs[0] if side == "left" else m.fnbrs[1]
        if nxt is None or nxt in seen or nxt not in view.bearings or nxt not in inbox:
            break
        b_me, b_nxt = m.bearing(me), m.bearing(nxt)
        if b_me is None or b_nxt is None:
            break
        if side == "left":
            theta_f, _ = frontier_angle(b_nxt, b_me)
        else:
            theta_f, _ = frontier_angle(b_me, b_nxt)
        if not triangle_quality(theta_f, k):
            break
        depth = None
        if layer is not None:
            d = _depth_of(inbox, prev, nxt, skip=(me,))
            if d is None or d > layer:
                break
            depth = 1 + min(layer + 1 + len(found), d if d is not None else layer + 1)
        found.append(TriangleRecord(tri_key(me, nxt, prev), me, kind="discovery", created=created,
                                    depth=depth))
        dropped.append(prev)
        seen.add(nxt)
        prev = nxt
    return found, prev, dropped


def _settle(state: AgentState, view: NeighborView, inbox, params: AgentParams, fsm: str):
    """Store the new triangle, discover neighbors on both sides, hand over.

    A robot settling against a wall also closes the edge to a wall robot at
    either end of its new frontier stretch (see ``_wall_cut``).
    """
    me, L, R = state.id, state.L, state.R
    walls = {edge_key(L, R)} if {L, R} == set(BASE_IDS) else set()
    kind = "wall" if fsm == FRONTIER_WALL else "expansion"
    room = min(MAX_OWNED - 1, MAX_DISCONNECT - 1)
    layer = -1 if walls else _depth_of(inbox, L, R, skip=(me,))
    if layer is None:
        layer = 0
    left, newL, dropL = discover_triangles(me, view, inbox, "left", L, params.quality_k,
                                           room, exclude=(R,), created=view.round, layer=layer)
    room -= len(dropL)
    right, newR, dropR = discover_triangles(me, view, inbox, "right", R, params.quality_k,
                                            room, exclude=(L, newL), created=view.round, layer=layer)
    records = [TriangleRecord(tri_key(me, L, R), me, kind=kind, created=view.round, depth=layer + 1),
               *left, *right]
    drop = dropL + dropR
    payload = (newL, newR)
    if fsm == FRONTIER_WALL:
        for cut in _wall_cuts(view, inbox, newL, newR):
            walls.add(edge_key(me, cut))
            drop.append(cut)
            log.info("robot %d closes wall edge with %d", me, cut)
            newL = None if cut == newL else newL
            newR = None if cut == newR else newR
    owned = []
    for rec in records:
        mine = frozenset(e for e in walls if e[0] in rec.key and e[1] in rec.key)
        owned.append(replace(rec, wall_edges=mine) if mine else rec)
    nxt = _transition(state, fsm, L=newL, R=newR, owned=tuple(owned), crossed=False, avoid=(),
                      touched_wall=state.touched_wall or fsm == FRONTIER_WALL)
    msg = _message(nxt, view, inbox, frontier_payload=payload, disconnect=tuple(drop))
    return nxt, msg, STOP


def _arrive(state: AgentState, view: NeighborView, inbox, params: AgentParams):
    return _settle(state, view, inbox, params, FRONTIER)


def _lost_endpoint(state: AgentState, view: NeighborView, inbox, params: AgentParams):
    """An endpoint went out of sight: retrace our steps, then give up.

    Past the edge, an occluding corner is the usual cause, so backing up
    along the path just driven restores the view.
    """
    if state.crossed and state.backing < params.backoff_ticks:
        nxt = replace(state, backing=state.backing + 1, timer=state.timer + 1)
        heading = math.pi if state.backing == 0 else 0.0
        return nxt, _message(nxt, view, inbox, claim=edge_key(state.L, state.R)), Motion(heading, 1.0)
    if not state.crossed:
        return _blocked(state, view, inbox)
    log.info("robot %d lost frontier neighbor in %s; back to navigation", state.id, state.fsm)
    nxt = _transition(state, NAV, L=None, R=None, crossed=False, backing=0, behind=0, retreat=True)
    return nxt, _message(nxt, view, inbox), STOP


def _blocked(state: AgentState, view: NeighborView, inbox):
    """The edge cannot be crossed (occluded or walled off): report it."""
    edge = edge_key(state.L, state.R)
    log.info("robot %d reports frontier edge %s as impassable", state.id, edge)
    nxt = _transition(state, NAV, L=None, R=None, crossed=False, backing=0, behind=0,
                      avoid=state.avoid + (edge,), retreat=True)
    return nxt, _message(nxt, view, inbox, blocked=edge), STOP


def _edge_gone(state: AgentState, inbox) -> bool:
    """The target edge stopped being a frontier edge (a wedge closed it)."""
    mL, mR = inbox.get(state.L), inbox.get(state.R)
    if mL is None or mR is None:
        return False
    return mL.fnbrs[1] != state.R and mR.fnbrs[0] != state.L


def _abort(state: AgentState, view: NeighborView, inbox):
    log.info("robot %d: edge %s was filled; back to navigation", state.id, edge_key(state.L, state.R))
    nxt = _transition(state, NAV, L=None, R=None, crossed=False, backing=0, behind=0, retreat=True)
    return nxt, _message(nxt, view, inbox), STOP


def step_expand_triangle(state: AgentState, view: NeighborView, inbox, params: AgentParams):
    L, R = state.L, state.R
    if _edge_gone(state, inbox):
        return _abort(state, view, inbox)
    if L not in view.bearings or R not in view.bearings:
        return _lost_endpoint(state, view, inbox, params)
    bL, bR = view.bearings[L], view.bearings[R]
    if state.backing:
        theta = _inner_angles(state.id, L, R, inbox)
        if theta is not None and 0.0 < ccw_angle(bL, bR) < math.pi:
            fsm = FRONTIER_WALL if state.touched_wall else FRONTIER
            return _settle(replace(state, backing=0), view, inbox, params, fsm)
        # announcements lag a round behind the view; keep still meanwhile
        nxt = replace(state, timer=state.timer + 1)
        return nxt, _message(nxt, view, inbox, claim=edge_key(L, R)), STOP
    sweep = ccw_angle(bL, bR)
    crossed_now = 0.0 < sweep < math.pi
    crossed = state.crossed or crossed_now
    if crossed_now and _inside_existing(view, inbox):
        # overshot past a neighboring edge of the wedge
        return _blocked(state, view, inbox)
    claim = edge_key(L, R) if crossed else None
    theta = _inner_angles(state.id, L, R, inbox)
    arrived = False
    if crossed_now and theta is not None:
        motion = expansion_controller(theta, bL, bR, params.goal_tol)
        if motion.arrived and not _wall_ahead(view.wall, bL, bR):
            return _arrive(replace(state, crossed=crossed), view, inbox, params)
        arrived = motion.arrived
    else:
        motion = Motion(_outward(bL, bR), 1.0)
    if not crossed and view.wall.contact:
        return _blocked(state, view, inbox)
    # a wall close beyond the goal would leave a sliver: settle against it instead
    if crossed and (view.wall.contact or arrived):
        nxt = _transition(state, WALL, crossed=True, touched_wall=True)
        return nxt, _message(nxt, view, inbox, claim=claim), STOP
    nxt = _transition(state, EXPAND, crossed=crossed)
    return nxt, _message(nxt, view, inbox, claim=claim), motion


def is_isosceles(angles, tol: float, floor: float = math.pi / 4, apex: int | None = None) -> bool:
    """Two corners agree within ``tol`` and neither is a sliver corner.

    With ``apex`` set, only pairs that include that corner count.
    """
    for i in range(3):
        for j in range(i + 1, 3):
            if apex is not None and apex not in (i, j):
                continue
            a, b = angles[i], angles[j]
            if abs(a - b) <= tol and min(a, b) >= floor - tol:
                return True
    return False


def _wall_ahead(wall, b_L: float, b_R: float) -> bool:
    """Contact, or a wall sensed on the unexplored side of the edge."""
    if wall.contact:
        return True
    if not wall.near_wall or wall.wall_bearing is None:
        return False
    return angle_diff(wall.wall_bearing, _outward(b_L, b_R)) < math.pi / 2


# -- WallFollow -------------------------------------------------------------------

def _wall_cuts(view: NeighborView, inbox, L, R) -> list:
    """Frontier neighbors that now close a wall edge with us.

    A wall robot qualifies when its outer frontier side is already closed
    (a corner) or when it sits along the wall we are touching.
    """
    wb = view.wall.wall_bearing
    cuts = []
    for n, outer in ((L, 0), (R, 1)):
        m = inbox.get(n)
        if m is None or m.state != FRONTIER_WALL:
            continue
        along = wb is not None and abs(angle_diff(view.bearings[n], wb) - math.pi / 2) <= math.pi / 8
        if m.fnbrs[outer] is None or along:
            cuts.append(n)
    return cuts


def _inside_existing(view: NeighborView, inbox) -> bool:
    """Clearly inside a triangle someone already owns.

    The margin absorbs quantization: each bearing may be off by half a
    sector, so a gap below pi - pi/8 is inside for certain at pi/8.
    """
    for e, _ in _heard_triangles(inbox):
        if view.id in e.key or any(v not in view.bearings for v in e.key):
            continue
        if max_gap([view.bearings[v] for v in e.key]) < math.pi - INSIDE_MARGIN:
            return True
    return False


def _finish_wall(state: AgentState, view: NeighborView, inbox, params: AgentParams):
    return _settle(state, view, inbox, params, FRONTIER_WALL)


def step_wall_follow(state: AgentState, view: NeighborView, inbox, params: AgentParams):
    L, R = state.L, state.R
    if _edge_gone(state, inbox):
        return _abort(state, view, inbox)
    if L not in view.bearings or R not in view.bearings:
        return _lost_endpoint(state, view, inbox, params)
    bL, bR = view.bearings[L], view.bearings[R]
    if state.backing:
        theta = _inner_angles(state.id, L, R, inbox)
        if theta is not None and 0.0 < ccw_angle(bL, bR) < math.pi:
            return _finish_wall(replace(state, backing=0), view, inbox, params)
        nxt = replace(state, timer=state.timer + 1)
        return nxt, _message(nxt, view, inbox, claim=edge_key(L, R)), STOP
    theta = _inner_angles(state.id, L, R, inbox)
    wall = view.wall
    crossed_now = 0.0 < ccw_angle(bL, bR) < math.pi
    behind = 0 if crossed_now else state.behind + 1
    if behind >= params.backoff_ticks:
        # slid back behind the edge along the wall: the sliver beyond it is unreachable
        return _blocked(state, view, inbox)
    if crossed_now and _inside_existing(view, inbox):
        # slid around a corner of the edge into the neighboring triangle
        return _blocked(state, view, inbox)
    if theta is not None and crossed_now:
        apex = angle_diff(bL, bR)
        if wall.contact and is_isosceles((theta.theta_L, theta.theta_R, apex), params.goal_tol, apex=2):
            return _finish_wall(state, view, inbox, params)
        if region(theta, params.goal_tol) == 4 and not wall.near_wall:
            return _finish_wall(state, view, inbox, params)
        if state.timer >= params.wall_timeout:
            if min(theta.theta_L, theta.theta_R, apex) < math.pi / 8:
                # squeezed into a corner: the wedge beyond the edge is a sliver
                return _blocked(state, view, inbox)
            log.info("robot %d wall-follow timeout; keeping current triangle", state.id)
            return _finish_wall(state, view, inbox, params)
    if wall.wall_bearing is not None and theta is not None:
        # by the law of sines we are closer to L iff sin(theta_L) > sin(theta_R)
        near = bL if math.sin(theta.theta_L) > math.sin(theta.theta_R) else bR
        tangents = (norm_angle(wall.wall_bearing + math.pi / 2), norm_angle(wall.wall_bearing - math.pi / 2))
        heading = max(tangents, key=lambda t: angle_diff(t, near))
        if wall.contact:
            # back off the wall a little while sliding along it
            heading = mid_direction(heading, mid_direction(heading, wall.wall_bearing + math.pi))
        else:
            heading = mid_direction(heading, wall.wall_bearing)
        motion = Motion(heading, 1.0)
    elif theta is not None and crossed_now:
        motion = expansion_controller(theta, bL, bR, params.goal_tol)
        if motion.arrived:
            return _finish_wall(state, view, inbox, params)
    else:
        motion = Motion(_outward(bL, bR), 1.0)
    nxt = _transition(state, WALL, behind=behind)
    return nxt, _message(nxt, view, inbox, claim=edge_key(L, R)), motion


# -- stationary states ---------------------------------------------------------------

def _wedge_action(state: AgentState, inbox, theta_f):
    """What to do about a sharp frontier wedge at this robot, if anything.

    The trigger is a navigator that just started expanding one of our two
    frontier edges: by the breadth-first guidance it came to the shallowest
    frontier triangle, so a wedge triangle is no deeper than the layer
    being built.  Returns ("close", (L, R)) when L and R can form the wedge
    triangle, ("seal", (L, R)) when they cannot (an obstacle corner sits in
    the wedge), else None.  Neighboring wedges defer to the sharper one.
    """
    me, L, R = state.id, state.L, state.R
    if theta_f is None or theta_f >= SHARP_ANGLE or L is None or R is None:
        return None
    mL, mR = inbox.get(L), inbox.get(R)
    if mL is None or mR is None or mL.fnbrs[1] != me or mR.fnbrs[0] != me:
        return None
    mine = {edge_key(me, L), edge_key(me, R)}
    if mine & _claims(inbox):
        return None
    trigger = any(m.state == EXPAND and None not in m.fnbrs and edge_key(*m.fnbrs) in mine
                  for m in inbox.values())
    if not trigger:
        return None
    for x in (L, R):
        fa = inbox[x].frontier_angle
        if fa is not None and fa < SHARP_ANGLE and (fa, x) < (theta_f, me):
            return None
    if mL.bearing(R) is None or mR.bearing(L) is None:
        return "seal", (L, R)
    if len(inbox[min(L, R)].hop_table) >= MAX_OWNED:
        return "seal", (L, R)
    return "close", (L, R)


def step_stationary(state: AgentState, view: NeighborView, inbox, params: AgentParams):
    """Frontier, Frontier-Wall and Internal robots (and the base robots).

    Applies frontier-neighbor updates and disconnects, flags owned
    triangles that still have a frontier edge, runs one hop update and
    announces the frontier angle.
    """
    me = state.id
    L, R, fsm = state.L, state.R, state.fsm
    for sender in sorted(inbox):
        p = inbox[sender].frontier_payload
        if p is None:
            continue
        if fsm == INTERNAL and me in p:
            log.info("robot %d ignores frontier update from %d: already internal", me, sender)
            continue
        if p[0] == me:
            R = sender
        if p[1] == me:
            L = sender
    sealed = set()
    for sender in sorted(inbox):
        m = inbox[sender]
        if me not in m.disconnect:
            continue
        if m.state not in (FRONTIER, FRONTIER_WALL) or fsm not in (FRONTIER, FRONTIER_WALL):
            log.info("robot %d ignores disconnect from %d (%s)", me, sender, m.state)
        elif sender in (L, R):
            # wall edge between us: only that side closes
            L = None if L == sender else L
            R = None if R == sender else R
            sealed.add(edge_key(me, sender))
        else:
            # a discovery triangle covered both our frontier edges
            fsm = INTERNAL
    closed = []
    for sender in sorted(inbox):
        c = inbox[sender].close
        if c is None or me not in c or fsm == INTERNAL:
            continue
        if c[0] == me and R == sender:
            R = c[1]
        elif c[1] == me and L == sender:
            L = c[0]
        else:
            continue
        if me == min(c):
            closed.append((sender, c))
    walled = set(sealed)
    for sender in sorted(inbox):
        e = inbox[sender].blocked
        if e is None or me not in e or fsm == INTERNAL:
            continue
        x = e[0] if e[1] == me else e[1]
        if x in (L, R):
            L = None if L == x else L
            R = None if R == x else R
            walled.add(e)
    if fsm in (FRONTIER, FRONTIER_WALL) and L is None and R is None and state.owned:
        fsm = INTERNAL
    if fsm == INTERNAL:
        L = R = None
    claimed = _claims(inbox)
    fresh = []
    for mid, (a, b) in closed:
        d = [x for x in (_depth_of(inbox, a, mid), _depth_of(inbox, mid, b)) if x is not None]
        fresh.append(TriangleRecord(tri_key(a, mid, b), me, kind="discovery", created=view.round,
                                    depth=1 + min(d) if d else None))
    owned = []
    for rec in state.owned + tuple(fresh):
        extra = {e for e in walled if e[0] in rec.key and e[1] in rec.key}
        if extra:
            rec = replace(rec, wall_edges=rec.wall_edges | extra)
        front = fsm != INTERNAL and any(
            x is not None and x in rec.key and edge_key(me, x) not in claimed for x in (L, R))
        owned.append(rec if rec.is_frontier == front else replace(rec, is_frontier=front))
    known = {}
    for sender in sorted(inbox):
        for e in inbox[sender].hop_table:
            known[e.key] = (e.hop, sender)
    for rec in state.owned:
        known[rec.key] = (rec.hop, me)
    owned = update_triangle_hop(owned, known, params.hop_cap)
    depths = {}
    for sender in sorted(inbox):
        for e in inbox[sender].hop_table:
            depths[e.key] = e.depth
    for rec in state.owned:
        depths[rec.key] = rec.depth
    owned = tuple(update_triangle_depth(owned, depths, BASE_IDS))
    theta_f = None
    if fsm != INTERNAL and L in view.bearings and R in view.bearings:
        theta_f, _ = frontier_angle(view.bearings[L], view.bearings[R])
    close, drop = None, ()
    act = None
    if fsm in (FRONTIER, FRONTIER_WALL) and not closed and (L, R) == state.fnbrs:
        act = _wedge_action(state, inbox, theta_f)
    if act is not None:
        log.info("robot %d %ss its frontier wedge between %d and %d", me, act[0], *act[1])
        if act[0] == "close":
            close = act[1]
            fsm = INTERNAL
        else:
            # both edges become walls; the wedge stays unexplored
            drop = act[1]
        L, R, theta_f = None, None, None
        owned = tuple(replace(r, is_frontier=False) for r in owned)
    nxt = _transition(state, fsm, L=L, R=R, owned=owned)
    # pass the news on once so the far endpoint hears it even when occluded
    relay = min(walled) if walled else None
    return nxt, _message(nxt, view, inbox, frontier_angle=theta_f, blocked=relay, close=close,
                         disconnect=drop), STOP


def step_internal(state, view, inbox, params):
    return step_stationary(state, view, inbox, params)


def step_frontier(state, view, inbox, params):
    return step_stationary(state, view, inbox, params)


_DISPATCH = {
    NAV: step_nav_internal,
    EXPAND: step_expand_triangle,
    WALL: step_wall_follow,
    FRONTIER: step_frontier,
    FRONTIER_WALL: step_frontier,
    INTERNAL: step_internal,
}


def step(state: AgentState, view: NeighborView, inbox, params: AgentParams = AgentParams()):
    return _DISPATCH[state.fsm](state, view, inbox, params)
