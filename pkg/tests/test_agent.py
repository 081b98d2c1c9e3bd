import math
from collections import Counter

import networkx as nx
import numpy as np
import pytest
from shapely.geometry import LineString

from matsim import agent as A
from matsim.comms import HopEntry, RoundMessage, build_neighbor_graph
from matsim.environment import Pose, RobotSpec, WorkspacePolygon
from matsim.geometry import InnerAngles, angle_diff, bearing_to, norm_angle
from matsim.sim import World
from matsim.tristore import TriangleRecord, extract_dual_graph, tri_key, update_triangle_hop
from conftest import scenario

BIG = WorkspacePolygon(((0, 0), (8, 0), (8, 8), (0, 8)), (), ((0.5, 0.1), (0.9, 0.1)))
EXACT = RobotSpec(r_max=3.0, bearing_resolution=0.0)
TOL = math.pi / 16
H = math.sqrt(3) / 2


def inner(p, L, R):
    return InnerAngles(angle_diff(bearing_to(L, p), bearing_to(L, R)),
                       angle_diff(bearing_to(R, p), bearing_to(R, L)))


def world_views(points):
    poses = {i: Pose(x, y, 0.0) for i, (x, y) in points.items()}
    return build_neighbor_graph(poses, EXACT, BIG)[1]


def msg(views, i, state=A.FRONTIER, hops=(), fnbrs=(None, None)):
    return RoundMessage(i, state, tuple(sorted(views[i].bearings.items())), tuple(hops), fnbrs)


# -- controller --------------------------------------------------------------------

def test_region_goal_and_beyond_endpoint():
    assert A.region(InnerAngles(math.pi / 3, math.pi / 3), TOL) == 4
    assert A.region(InnerAngles(1.7, 0.4), TOL) == 1
    assert A.region(InnerAngles(0.3, 0.3), TOL) == 2
    assert A.region(InnerAngles(0.9, 0.3), TOL) == 3


def test_controller_arrives_at_equilateral_point():
    L, R = (0.0, 0.0), (1.0, 0.0)
    p = (0.5, H)
    m = A.expansion_controller(inner(p, L, R), bearing_to(p, L), bearing_to(p, R), TOL)
    assert m.arrived and m.speed == 0.0


def test_controller_moves_along_ray_from_l_to_open_angle_at_r():
    # the angle at R is the small one and far below goal: slide away from L
    m = A.expansion_controller(InnerAngles(0.5, 0.1), 2.9, 0.3, TOL)
    assert m.heading == pytest.approx(norm_angle(2.9 + math.pi))


def test_controller_balanced_close_to_edge_backs_off_both():
    m = A.expansion_controller(InnerAngles(0.2, 0.1), 2.9, 0.3, TOL)
    away_l, away_r = norm_angle(2.9 + math.pi), norm_angle(0.3 + math.pi)
    assert angle_diff(m.heading, away_l) == pytest.approx(angle_diff(m.heading, away_r))
    assert angle_diff(m.heading, away_l) < math.pi / 2


def test_controller_converges_without_recrossing():
    L, R = (0.0, 0.0), (1.0, 0.0)
    edge = LineString([L, R])
    rng = np.random.default_rng(1)
    worst = 0
    for _ in range(100):
        p = (rng.uniform(-0.8, 1.8), rng.uniform(0.02, 1.6))
        for tick in range(2000):
            m = A.expansion_controller(inner(p, L, R), bearing_to(p, L), bearing_to(p, R), TOL)
            if m.arrived:
                break
            q = (p[0] + 0.025 * math.cos(m.heading), p[1] + 0.025 * math.sin(m.heading))
            assert not LineString([p, q]).intersects(edge)
            p = q
        else:
            pytest.fail(f"no arrival from {p}")
        worst = max(worst, tick)
        th = inner(p, L, R)
        assert abs(th.theta_L - math.pi / 3) <= TOL and abs(th.theta_R - math.pi / 3) <= TOL
    assert worst < 200


# -- NavInternal -------------------------------------------------------------------

def test_only_base_edge_starts_expansion():
    views = world_views({0: (2, 2), 1: (2.5, 2), 9: (2.2, 1.5)})
    inbox = {0: msg(views, 0, A.FRONTIER_WALL, fnbrs=(None, 1)),
             1: msg(views, 1, A.FRONTIER_WALL, fnbrs=(0, None))}
    state, _, motion = A.step(A.navigator_state(9), views[9], inbox)
    assert (state.fsm, state.L, state.R) == (A.EXPAND, 0, 1)
    assert motion.speed == 0.0


def test_frontier_triangle_starts_expansion_of_its_edge():
    pts = {0: (2, 2), 1: (3, 2), 2: (2.5, 2 + H), 9: (2.5, 2.3)}
    views = world_views(pts)
    entry = HopEntry((0, 1, 2), 0, True, None, 0)
    inbox = {0: msg(views, 0, fnbrs=(None, 2)),
             1: msg(views, 1, fnbrs=(2, None)),
             2: msg(views, 2, hops=[entry], fnbrs=(0, 1))}
    state, _, _ = A.step(A.navigator_state(9), views[9], inbox)
    assert (state.fsm, state.L, state.R) == (A.EXPAND, 0, 2)


def _strip(n):
    pts = {i: (2 + 0.5 * i, 2 + H * 0.5 * (i % 2)) for i in range(n + 2)}
    recs = [TriangleRecord(tri_key(i, i + 1, i + 2), i + 2, is_frontier=(i == 0)) for i in range(n)]
    for _ in range(n):
        heard = {r.key: (r.hop, r.owner) for r in recs}
        recs = [update_triangle_hop([r], heard)[0] for r in recs]
    return pts, recs


def test_navigator_heads_across_the_downhill_edge():
    pts, recs = _strip(6)
    dual = nx.Graph(extract_dual_graph(recs).edges)
    truth = nx.single_source_shortest_path_length(dual, recs[0].key)
    assert [r.hop for r in recs] == [truth[r.key] for r in recs]
    target = recs[3]
    corners = [pts[v] for v in target.key]
    me = (sum(x for x, _ in corners) / 3, sum(y for _, y in corners) / 3)
    views = world_views({**pts, 99: me})
    by_owner = {}
    for r in recs:
        by_owner.setdefault(r.owner, []).append(HopEntry(r.key, r.hop, r.is_frontier, r.via, r.depth))
    inbox = {i: msg(views, i, A.INTERNAL, hops=by_owner.get(i, ())) for i in pts}
    state, _, motion = A.step(A.navigator_state(99), views[99], inbox)
    assert state.fsm == A.NAV
    ray = LineString([me, (me[0] + 3 * math.cos(motion.heading), me[1] + 3 * math.sin(motion.heading))])
    # the hop-2 neighbor shares vertices 3 and 4 with the hop-3 triangle
    assert ray.intersects(LineString([pts[3], pts[4]]))
    assert not ray.intersects(LineString([pts[4], pts[5]]))


def test_lost_navigator_without_owners_holds_still():
    views = world_views({5: (4, 4)})
    state, _, motion = A.step(A.navigator_state(5), views[5], {})
    assert state.fsm == A.NAV and motion.heading is None


# -- discovery ---------------------------------------------------------------------

def _fan(points_left, u=(4.0, 4.0)):
    """New robot 9 at u, just expanded edge (L=10, R=11); 10 -> 12 -> ... run left."""
    pts = {9: u, 11: (u[0] + 0.5, u[1] + H)}
    chain = [10] + [12 + i for i in range(len(points_left) - 1)]
    for i, p in zip(chain, points_left):
        pts[i] = p
    views = world_views(pts)
    inbox = {}
    for k, i in enumerate(chain):
        left = chain[k + 1] if k + 1 < len(chain) else None
        right = 11 if k == 0 else chain[k - 1]
        inbox[i] = msg(views, i, fnbrs=(left, right))
    inbox[11] = msg(views, 11, fnbrs=(10, None))
    return views, inbox, chain


def _ring(k, u=(4.0, 4.0)):
    return (u[0] + math.cos(-k * math.pi / 3), u[1] + math.sin(-k * math.pi / 3))


def test_discovery_follows_a_convex_frontier():
    views, inbox, chain = _fan([_ring(k) for k in range(4)])
    recs, new_left, dropped = A.discover_triangles(9, views[9], inbox, "left", 10, 3 * math.pi / 4, 5)
    assert [r.key for r in recs] == [tri_key(9, chain[i + 1], chain[i]) for i in range(3)]
    assert new_left == chain[3] and dropped == chain[:3]
    assert all(r.owner == 9 and r.kind == "discovery" for r in recs)


def test_discovery_stops_at_first_wide_angle():
    far = (_ring(1)[0], _ring(1)[1] - 0.8)
    views, inbox, chain = _fan([_ring(0), _ring(1), far])
    recs, new_left, dropped = A.discover_triangles(9, views[9], inbox, "left", 10, 3 * math.pi / 4, 5)
    assert len(recs) == 1 and new_left == chain[1] and dropped == [10]


def test_discovery_needs_a_frontier_edge():
    views, inbox, _ = _fan([_ring(0), _ring(1)])
    inbox[10] = msg(views, 10, fnbrs=(None, 11))
    assert A.discover_triangles(9, views[9], inbox, "left", 10, 3 * math.pi / 4, 5) == ([], 10, [])


def test_discovery_respects_budget():
    views, inbox, _ = _fan([_ring(k) for k in range(4)])
    recs, _, dropped = A.discover_triangles(9, views[9], inbox, "left", 10, 3 * math.pi / 4, 2)
    assert len(recs) == len(dropped) == 2


# -- whole runs ---------------------------------------------------------------------

def test_transitions_are_legal(batch):
    runs, _ = batch
    allowed = A.LEGAL_TRANSITIONS | A.RECOVERY_TRANSITIONS
    seen = Counter()
    for r in runs:
        for _, _, old, new in r.world.transitions:
            assert (old, new) in allowed
            seen[old, new] += 1
    assert seen[A.NAV, A.EXPAND] > 0 and seen[A.EXPAND, A.FRONTIER] > 0


def test_no_edge_expanded_twice(batch):
    runs, _ = batch
    for r in runs:
        edges = [tuple(v for v in t.key if v != t.owner) for t in r.world.records()
                 if t.kind in ("expansion", "wall")]
        assert len(edges) == len(set(edges))


def test_settled_robots_own_triangles(batch):
    runs, _ = batch
    for r in runs:
        for i, s in r.world.agents.items():
            if i not in A.BASE_IDS and s.fsm in (A.FRONTIER, A.FRONTIER_WALL):
                assert s.owned, f"{r.env} n={r.n} seed={r.seed} robot {i}"


@pytest.mark.parametrize("env,n,seed", [("rect", 10, 3), ("hole", 12, 5)])
def test_frontier_neighbors_stay_consistent(env, n, seed):
    # a settling robot names its neighbors one round before they hear of it,
    # so a branch or a one-sided link may show up for a single round
    w = World(scenario(env, n_robots=n, seed=seed))
    streaks = Counter()
    worst = Counter()
    while not w.finished():
        w.step()
        front = {i: s for i, s in w.agents.items() if s.fsm in (A.FRONTIER, A.FRONTIER_WALL)}
        g = nx.Graph()
        for i, s in front.items():
            g.add_edges_from((i, x) for x in s.fnbrs if x is not None)
        bad = {"branch": max((d for _, d in g.degree), default=0) > 2,
               "one-sided": any(s.L in front and front[s.L].R != i for i, s in front.items())}
        for k, b in bad.items():
            streaks[k] = streaks[k] + 1 if b else 0
            worst[k] = max(worst[k], streaks[k])
    assert worst["branch"] <= 1 and worst["one-sided"] <= 1
