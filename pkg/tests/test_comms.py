import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from matsim import agent as A
from matsim.comms import (MAX_DEGREE, MAX_DISCONNECT, MAX_OWNED, STATES, HopEntry, LinkCache,
                          MessageSizeError, RoundMessage, build_neighbor_graph, decode, encode, hop_limit,
                          id_bits, size_budget, two_hop_angles)
from matsim.environment import Pose, RobotSpec, WorkspacePolygon, line_of_sight
from matsim.geometry import angle_diff, bearing_to, norm_angle
from matsim.sim import World
from conftest import scenario

ROOM = WorkspacePolygon(((0, 0), (4, 0), (4, 4), (0, 4)), (), ((1, 0.1), (1.4, 0.1)))
EXACT = RobotSpec(r_max=1.0, bearing_resolution=0.0)
QUANT = RobotSpec(r_max=1.0)


def test_pair_in_range_is_adjacent():
    adj, _ = build_neighbor_graph({0: Pose(1, 1), 1: Pose(1.5, 1)}, QUANT, ROOM)
    assert adj == {0: [1], 1: [0]}


def test_pair_out_of_range_is_not():
    adj, _ = build_neighbor_graph({0: Pose(1, 1), 1: Pose(2.01, 1)}, QUANT, ROOM)
    assert adj == {0: [], 1: []}


def _random_poses(rng, w, n):
    minx, miny, maxx, maxy = w.shape.bounds
    out = {}
    while len(out) < n:
        p = rng.uniform((minx, miny), (maxx, maxy))
        if w.contains(tuple(p)):
            out[len(out)] = Pose(p[0], p[1], rng.uniform(0, 2 * math.pi))
    return out


def test_adjacency_matches_all_pairs_oracle():
    w = scenario("lroom").workspace
    spec = RobotSpec(r_max=1.2)
    rng = np.random.default_rng(11)
    for _ in range(5):
        poses = _random_poses(rng, w, 20)
        adj, views = build_neighbor_graph(poses, spec, w)
        for i in poses:
            want = [j for j in poses if j != i and math.dist(poses[i].xy, poses[j].xy) <= spec.r_max
                    and line_of_sight(poses[i].xy, poses[j].xy, w)]
            assert adj[i] == want
            assert sorted(views[i].bearings) == want


def test_incremental_links_match_fresh_graph():
    rng = np.random.default_rng(4)
    cache = LinkCache(QUANT, ROOM)
    poses = _random_poses(rng, ROOM, 15)
    for r in range(20):
        moved = rng.choice(15, size=3, replace=False)
        for i in moved:
            p = poses[int(i)]
            poses[int(i)] = Pose(min(3.9, max(0.1, p.x + rng.normal(0, 0.3))),
                                 min(3.9, max(0.1, p.y + rng.normal(0, 0.3))), p.heading)
        got = build_neighbor_graph(poses, QUANT, ROOM, r, cache)
        fresh = build_neighbor_graph(poses, QUANT, ROOM, r)
        assert got[0] == fresh[0]
        assert {i: v.bearings for i, v in got[1].items()} == {i: v.bearings for i, v in fresh[1].items()}


def test_orientation_recovers_relative_heading():
    poses = {0: Pose(1, 1, 0.3), 1: Pose(1.6, 1.4, 2.0)}
    _, views = build_neighbor_graph(poses, EXACT, ROOM)
    assert views[0].orientations[1] == pytest.approx(norm_angle(2.0 - 0.3))


def test_views_carry_no_positions():
    _, views = build_neighbor_graph({0: Pose(1, 1), 1: Pose(1.5, 1)}, QUANT, ROOM)
    assert set(vars(views[0])) == {"id", "round", "bearings", "orientations", "wall"}


# -- two-hop geometry -----------------------------------------------------------

def _inbox(views, sender_ids):
    return {j: RoundMessage(j, "Internal", tuple(sorted(views[j].bearings.items()))) for j in sender_ids}


def test_two_hop_equilateral():
    poses = {0: Pose(1.25, 1 + math.sqrt(3) / 4, 0.7), 1: Pose(1.0, 1.0, 1.1), 2: Pose(1.5, 1.0, 4.0)}
    _, views = build_neighbor_graph(poses, QUANT, ROOM)
    th = two_hop_angles(views[0], _inbox(views, [1, 2]))[1, 2]
    assert abs(th.theta_L - math.pi / 3) <= math.pi / 8
    assert abs(th.theta_R - math.pi / 3) <= math.pi / 8


def test_two_hop_pair_absent_when_out_of_range():
    poses = {0: Pose(2.0, 1.0), 1: Pose(1.2, 1.0), 2: Pose(2.8, 1.0)}
    _, views = build_neighbor_graph(poses, QUANT, ROOM)
    assert 2 not in views[1].bearings
    assert two_hop_angles(views[0], _inbox(views, [1, 2])) == {}


def test_two_hop_missing_announcement_omits_pair():
    poses = {0: Pose(1.25, 1.4), 1: Pose(1.0, 1.0), 2: Pose(1.5, 1.0)}
    _, views = build_neighbor_graph(poses, QUANT, ROOM)
    assert two_hop_angles(views[0], _inbox(views, [1])) == {}


def test_two_hop_random_cluster_within_a_sector():
    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(10):
        poses = {i: Pose(*rng.uniform(1.5, 2.3, size=2), rng.uniform(0, 2 * math.pi)) for i in range(8)}
        _, views = build_neighbor_graph(poses, QUANT, ROOM)
        for u in poses:
            table = two_hop_angles(views[u], _inbox(views, [j for j in poses if j != u]))
            for (l, r), th in table.items():
                pu, pl, pr = poses[u].xy, poses[l].xy, poses[r].xy
                truth_l = angle_diff(bearing_to(pl, pu), bearing_to(pl, pr))
                truth_r = angle_diff(bearing_to(pr, pu), bearing_to(pr, pl))
                assert abs(th.theta_L - truth_l) <= math.pi / 8 + 1e-9
                assert abs(th.theta_R - truth_r) <= math.pi / 8 + 1e-9
                checked += 1
    assert checked > 300


# -- wire format ---------------------------------------------------------------

ids = st.integers(0, 63)
opt_ids = st.none() | ids
sectors = st.integers(0, 15).map(lambda k: (k + 0.5) * math.pi / 8)
hops = st.none() | st.integers(0, hop_limit(64))
entries = st.builds(HopEntry, st.tuples(ids, ids, ids), hops, st.booleans(), st.none() | st.integers(0, 2), hops)
pairs = st.none() | st.tuples(ids, ids)
messages = st.builds(
    RoundMessage, ids, st.sampled_from(STATES),
    st.lists(st.tuples(ids, sectors), max_size=MAX_DEGREE).map(tuple),
    st.lists(entries, max_size=MAX_OWNED).map(tuple),
    st.tuples(opt_ids, opt_ids), st.none() | st.tuples(opt_ids, opt_ids),
    st.lists(ids, max_size=MAX_DISCONNECT).map(tuple), st.none() | sectors, pairs, pairs, pairs)


@given(messages)
def test_encode_roundtrip_and_budget(msg):
    data = encode(msg, 64, math.pi / 8)
    assert len(data) <= size_budget(64, math.pi / 8)
    back = decode(data, 64, math.pi / 8)
    assert [v for v, _ in back.angle_table] == [v for v, _ in msg.angle_table]
    assert [b for _, b in back.angle_table] == pytest.approx([b for _, b in msg.angle_table])
    assert replace(back, angle_table=(), frontier_angle=None) == replace(msg, angle_table=(), frontier_angle=None)
    if msg.frontier_angle is None:
        assert back.frontier_angle is None
    else:
        assert back.frontier_angle == pytest.approx(msg.frontier_angle)


def test_exact_bearings_roundtrip_as_float32():
    msg = RoundMessage(3, "Frontier", ((1, 0.123456789),), frontier_angle=2.5)
    back = decode(encode(msg, 8, None), 8, None)
    assert back.angle_table[0][1] == pytest.approx(0.123456789, rel=1e-6)


def test_oversized_messages_rejected():
    too_many = RoundMessage(0, "Internal", tuple((i, 0.1) for i in range(MAX_DEGREE + 1)))
    with pytest.raises(MessageSizeError):
        encode(too_many, 64, math.pi / 8)
    with pytest.raises(MessageSizeError):
        encode(RoundMessage(9, "Internal"), 8, math.pi / 8)


def test_id_and_hop_widths():
    assert [id_bits(n) for n in (2, 8, 9, 64, 512)] == [1, 3, 4, 6, 9]
    assert hop_limit(20) == 63


# -- rounds ----------------------------------------------------------------------

def test_controllers_read_only_last_round():
    w = World(scenario("rect", n_robots=8, seed=0))
    for _ in range(40):
        w.step()
    before = dict(w.messages)
    adj, views = build_neighbor_graph(w.poses, w.spec, w.w, w.round)
    outs = {}
    for i in sorted(w.agents, reverse=True):
        inbox = {j: before[j] for j in adj[i] if j in before}
        outs[i] = A.step(w.agents[i], views[i], inbox, w.params)
    w.step()
    for i, (state, msg, _) in outs.items():
        assert w.agents[i] == state
        assert w.messages[i] == msg


def test_first_round_base_robots_only():
    w = World(scenario("rect", n_robots=5, seed=1))
    w.step()
    assert w.round == 1
    assert sorted(w.agents) in ([0, 1], [0, 1, 2])
