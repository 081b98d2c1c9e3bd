"""Round messages, their wire size, and the line-of-sight neighbor graph.

Messages are in-process objects; ``encode`` exists to account for their
size on a bit-packed wire and to enforce the constant-size budget.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .environment import Pose, RobotSpec, WallReading, WorkspacePolygon, segments_intersect, sense_walls
from .geometry import InnerAngles, angle_diff, bearing_sector, measure, norm_angle, sector_center, sector_count

MAX_DEGREE = 16
MAX_OWNED = 8
MAX_DISCONNECT = 4

STATES = ("NavInternal", "ExpandTriangle", "WallFollow", "Frontier", "FrontierWall", "Internal")
STATE_BITS = 3
HOP_VIA_BITS = 2


class MessageSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class HopEntry:
    key: tuple
    hop: int | None
    frontier: bool
    # index into key of the vertex opposite the edge leading downhill
    via: int | None = None
    depth: int | None = None


@dataclass(frozen=True)
class RoundMessage:
    sender: int
    state: str
    angle_table: tuple = ()          # (neighbor_id, bearing)
    hop_table: tuple = ()            # HopEntry
    fnbrs: tuple = (None, None)      # announced (left, right) frontier neighbors
    frontier_payload: tuple | None = None   # (robot whose R becomes sender, robot whose L becomes sender)
    disconnect: tuple = ()
    frontier_angle: float | None = None
    claim: tuple | None = None       # frontier edge being expanded, sorted pair
    blocked: tuple | None = None     # frontier edge found impassable, sorted pair
    close: tuple | None = None       # (left, right): fill the wedge at the sender between them

    def bearing(self, nid: int) -> float | None:
        for v, b in self.angle_table:
            if v == nid:
                return b
        return None


def id_bits(n: int) -> int:
    return max(1, math.ceil(math.log2(max(n, 2))))


def hop_limit(n: int) -> int:
    """Largest hop count the wire format carries for ``n`` robots."""
    return (1 << (id_bits(n) + 1)) - 1


def angle_bits(resolution: float | None) -> int:
    if not resolution:
        return 32
    return max(1, math.ceil(math.log2(sector_count(resolution))))


def _count_bits(cap: int) -> int:
    return math.ceil(math.log2(cap + 1))


class _BitWriter:
    def __init__(self):
        self.value = 0
        self.nbits = 0

    def put(self, v: int, width: int):
        if v < 0 or v >= (1 << width):
            raise MessageSizeError(f"value {v} does not fit in {width} bits")
        self.value = (self.value << width) | v
        self.nbits += width

    def opt(self, v, width: int):
        self.put(0 if v is None else 1, 1)
        if v is not None:
            self.put(v, width)

    def bytes(self) -> bytes:
        nbytes = (self.nbits + 7) // 8
        return (self.value << (nbytes * 8 - self.nbits)).to_bytes(nbytes, "big")


class _BitReader:
    def __init__(self, data: bytes):
        self.value = int.from_bytes(data, "big")
        self.pos = len(data) * 8

    def get(self, width: int) -> int:
        self.pos -= width
        return (self.value >> self.pos) & ((1 << width) - 1)

    def opt(self, width: int):
        return self.get(width) if self.get(1) else None


def _angle_code(a: float, resolution: float | None) -> int:
    if resolution:
        return bearing_sector(a, resolution)
    return struct.unpack(">I", struct.pack(">f", a))[0]


def _angle_value(code: int, resolution: float | None) -> float:
    if resolution:
        return sector_center(code, resolution)
    return struct.unpack(">f", struct.pack(">I", code))[0]


def _pack(msg: RoundMessage, n: int, resolution: float | None) -> _BitWriter:
    b = id_bits(n)
    hb = b + 1
    ab = angle_bits(resolution)
    if len(msg.angle_table) > MAX_DEGREE or len(msg.hop_table) > MAX_OWNED \
            or len(msg.disconnect) > MAX_DISCONNECT:
        raise MessageSizeError(f"message from {msg.sender} exceeds table caps")
    w = _BitWriter()
    w.put(msg.sender, b)
    w.put(STATES.index(msg.state), STATE_BITS)
    w.put(len(msg.angle_table), _count_bits(MAX_DEGREE))
    for v, bearing in msg.angle_table:
        w.put(v, b)
        w.put(_angle_code(bearing, resolution), ab)
    w.put(len(msg.hop_table), _count_bits(MAX_OWNED))
    for e in msg.hop_table:
        for v in e.key:
            w.put(v, b)
        w.opt(e.hop, hb)
        w.put(int(e.frontier), 1)
        w.put(3 if e.via is None else e.via, HOP_VIA_BITS)
        w.opt(e.depth, hb)
    for v in msg.fnbrs:
        w.opt(v, b)
    w.put(0 if msg.frontier_payload is None else 1, 1)
    if msg.frontier_payload is not None:
        for v in msg.frontier_payload:
            w.opt(v, b)
    w.put(len(msg.disconnect), _count_bits(MAX_DISCONNECT))
    for v in msg.disconnect:
        w.put(v, b)
    w.opt(None if msg.frontier_angle is None else _angle_code(msg.frontier_angle, resolution), ab)
    for pair in (msg.claim, msg.blocked, msg.close):
        w.put(0 if pair is None else 1, 1)
        if pair is not None:
            w.put(pair[0], b)
            w.put(pair[1], b)
    return w


def encoded_bits(msg: RoundMessage, n: int, resolution: float | None) -> int:
    """Exact wire length of a message in bits, before byte padding."""
    return _pack(msg, n, resolution).nbits


def encode(msg: RoundMessage, n: int, resolution: float | None) -> bytes:
    """Bit-pack a message for an ``n``-robot network.

    Every field is bounded by an id width, an angle width or a fixed cap,
    so the result never exceeds ``size_budget(n, resolution)``.
    """
    data = _pack(msg, n, resolution).bytes()
    if len(data) > size_budget(n, resolution):
        raise MessageSizeError(f"{len(data)} bytes exceeds budget {size_budget(n, resolution)}")
    return data


def decode(data: bytes, n: int, resolution: float | None) -> RoundMessage:
    """Inverse of ``encode`` (bearings come back as sector centers)."""
    b = id_bits(n)
    hb = b + 1
    ab = angle_bits(resolution)
    r = _BitReader(data)
    sender = r.get(b)
    state = STATES[r.get(STATE_BITS)]
    angles = []
    for _ in range(r.get(_count_bits(MAX_DEGREE))):
        v = r.get(b)
        angles.append((v, _angle_value(r.get(ab), resolution)))
    hops = []
    for _ in range(r.get(_count_bits(MAX_OWNED))):
        key = (r.get(b), r.get(b), r.get(b))
        hop = r.opt(hb)
        frontier = bool(r.get(1))
        via = r.get(HOP_VIA_BITS)
        depth = r.opt(hb)
        hops.append(HopEntry(key, hop, frontier, None if via == 3 else via, depth))
    fnbrs = (r.opt(b), r.opt(b))
    payload = (r.opt(b), r.opt(b)) if r.get(1) else None
    disc = tuple(r.get(b) for _ in range(r.get(_count_bits(MAX_DISCONNECT))))
    fa = r.opt(ab)
    claim = (r.get(b), r.get(b)) if r.get(1) else None
    blocked = (r.get(b), r.get(b)) if r.get(1) else None
    close = (r.get(b), r.get(b)) if r.get(1) else None
    return RoundMessage(sender, state, tuple(angles), tuple(hops), fnbrs, payload, disc,
                        None if fa is None else _angle_value(fa, resolution), claim, blocked, close)


def _max_bits(n: int, resolution: float | None) -> int:
    b = id_bits(n)
    ab = angle_bits(resolution)
    bits = b + STATE_BITS
    bits += _count_bits(MAX_DEGREE) + MAX_DEGREE * (b + ab)
    bits += _count_bits(MAX_OWNED) + MAX_OWNED * (3 * b + 2 * (1 + b + 1) + 1 + HOP_VIA_BITS)
    bits += 2 * (1 + b)
    bits += 1 + 2 * (1 + b)
    bits += _count_bits(MAX_DISCONNECT) + MAX_DISCONNECT * b
    bits += 1 + ab
    bits += 3 * (1 + 2 * b)
    return bits


def size_budget(n: int, resolution: float | None) -> int:
    """Largest encoded message, in bytes, for an ``n``-robot network."""
    return (_max_bits(n, resolution) + 7) // 8


# -- neighbor graph ----------------------------------------------------------

@dataclass
class NeighborView:
    """What robot ``id`` can sense this round; no positions, no ranges."""

    id: int
    round: int
    bearings: dict = field(default_factory=dict)      # neighbor -> measured bearing
    orientations: dict = field(default_factory=dict)  # neighbor -> heading in my frame
    wall: WallReading = WallReading(False, False, None)

    @property
    def neighbors(self):
        return sorted(self.bearings)


def orientation(b_u_to_v: float, b_v_to_u: float) -> float:
    """Heading of v expressed in u's frame, from the two mutual bearings."""
    return norm_angle(b_u_to_v + math.pi - b_v_to_u)


class LinkCache:
    """Pairwise range and line-of-sight, recomputed only for robots that moved."""

    def __init__(self, spec: RobotSpec, w: WorkspacePolygon):
        self.spec = spec
        self.w = w
        self.pos: dict[int, tuple[float, float]] = {}
        self.links: dict[int, set[int]] = {}
        # last round's views, reused for robots whose surroundings did not change
        self.poses: dict[int, Pose] = {}
        self.views: dict[int, NeighborView] = {}

    def update(self, poses: dict[int, Pose]):
        moved = [i for i, p in poses.items() if self.pos.get(i) != p.xy]
        for i in list(self.pos):
            if i not in poses:
                moved.append(i)
        if not moved:
            return self.links
        for i in moved:
            for j in self.links.pop(i, ()):
                self.links.get(j, set()).discard(i)
            if i in poses:
                self.pos[i] = poses[i].xy
            else:
                self.pos.pop(i, None)
        ids = sorted(self.pos)
        if not ids:
            return self.links
        xy = np.array([self.pos[i] for i in ids])
        for i in moved:
            if i not in self.pos:
                continue
            self.links.setdefault(i, set())
            p = self.pos[i]
            d = np.hypot(xy[:, 0] - p[0], xy[:, 1] - p[1])
            for k in np.nonzero(d <= self.spec.r_max)[0]:
                j = ids[k]
                if j == i:
                    continue
                if not np.any(segments_intersect(p, self.pos[j], self.w.walls)):
                    self.links[i].add(j)
                    self.links.setdefault(j, set()).add(i)
        return self.links


def build_neighbor_graph(poses: dict[int, Pose], spec: RobotSpec, w: WorkspacePolygon,
                         round_index: int = 0, cache: LinkCache | None = None):
    """Adjacency (id -> sorted neighbor ids) and each robot's sensor view.

    Two robots are adjacent when within ``r_max`` of each other with an
    unobstructed segment between them.  Bearings are quantized to the
    spec's resolution.
    """
    cache = cache or LinkCache(spec, w)
    links = cache.update(poses)
    adjacency = {i: sorted(links.get(i, ())) for i in sorted(poses)}
    q = spec.quantum
    changed = {i for i, p in poses.items() if cache.poses.get(i) != p}
    prev = cache.views
    raw = {}

    def bearing(i, j):
        if i not in changed and j not in changed and i in prev:
            b = prev[i].bearings.get(j)
            if b is not None:
                return b
        b = raw.get((i, j))
        if b is None:
            pi, pj = poses[i], poses[j]
            b = raw[i, j] = measure(math.atan2(pj.y - pi.y, pj.x - pi.x) - pi.heading, q)
        return b

    views = {}
    for i, nbrs in adjacency.items():
        old = prev.get(i)
        wall = old.wall if old is not None and i not in changed else sense_walls(poses[i], spec, w)
        v = NeighborView(i, round_index, wall=wall)
        for j in nbrs:
            v.bearings[j] = bearing(i, j)
            v.orientations[j] = orientation(v.bearings[j], bearing(j, i))
        views[i] = v
    cache.poses = dict(poses)
    cache.views = views
    return adjacency, views


def two_hop_angles(view: NeighborView, inbox: dict[int, RoundMessage]) -> dict:
    """Inner angles of every candidate triangle (u, l, r) around robot u.

    Uses only what neighbors announced: l's bearings to u and r, and r's
    bearings to u and l.  Pairs with a missing announcement are omitted.
    """
    me = view.id
    out = {}
    nbrs = [n for n in view.neighbors if n in inbox]
    tables = {n: dict(inbox[n].angle_table) for n in nbrs}
    for a in range(len(nbrs)):
        l = nbrs[a]
        tl = tables[l]
        if me not in tl:
            continue
        for c in range(a + 1, len(nbrs)):
            r = nbrs[c]
            tr = tables[r]
            if r not in tl or l not in tr or me not in tr:
                continue
            out[l, r] = InnerAngles(angle_diff(tl[me], tl[r]), angle_diff(tr[me], tr[l]))
    return out
