"""Lockstep round loop: sensing, delivery, controllers, motion, checks, trace."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import agent as A
from .comms import LinkCache, MessageSizeError, build_neighbor_graph, encode, hop_limit
from .environment import Pose, integrate_motion
from .tristore import (check_owner_connectivity, check_owner_lemma, classify_edges,
                       tri_key, triangle_polygon)

log = logging.getLogger(__name__)

INJECT_DEPTH = 0.15     # fraction of the base-edge length
STABLE_ROUNDS = 3


class InvariantViolation(RuntimeError):
    def __init__(self, round_index: int, kind: str, detail):
        super().__init__(f"round {round_index}: {kind} violated: {detail}")
        self.round = round_index
        self.kind = kind
        self.detail = detail


@dataclass
class RoundChecks:
    """Per-round invariant checks, re-run only when the triangle set changes."""

    strict: bool = True
    _sig: object = None
    _polys: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    rounds_checked: int = 0

    def run(self, world: "World"):
        records = world.records()
        sig = tuple((r.key, r.owner, r.wall_edges) for r in records)
        self.rounds_checked += 1
        if sig == self._sig:
            return
        self._sig = sig
        found = []
        bad = check_owner_lemma(records)
        if bad:
            found.append(("owner-on-frontier-edge", [r.key for r in bad]))
        bad = check_owner_connectivity(records, world.adjacency)
        if bad:
            found.append(("owner-connectivity", bad))
        pos = {i: p.xy for i, p in world.poses.items()}
        fresh = [r for r in records if r.key not in self._polys]
        for r in fresh:
            poly = triangle_polygon(r.key, pos)
            for k, other in self._polys.items():
                if poly.intersects(other) and poly.intersection(other).area > 1e-9:
                    found.append(("disjoint-interiors", (r.key, k)))
            self._polys[r.key] = poly
        for kind, detail in found:
            self.violations.append((world.round, kind, detail))
            if self.strict:
                raise InvariantViolation(world.round, kind, detail)


class World:
    """Full simulator state.  Only the analysis side reads positions."""

    def __init__(self, scenario, trace=None, check: bool = True, strict: bool = True):
        self.sc = scenario
        self.w = scenario.workspace
        self.spec = scenario.robot
        self.params = replace(scenario.agent, hop_cap=hop_limit(scenario.n_robots))
        self.rng = np.random.default_rng(scenario.seed)
        self.round = 0
        self.poses: dict[int, Pose] = {}
        self.agents: dict[int, A.AgentState] = {}
        self.messages: dict = {}
        self.adjacency: dict = {}
        self.links = LinkCache(self.spec, self.w)
        self.trace = trace
        self.checks = RoundChecks(strict) if check else None
        self.transitions: list[tuple] = []
        self.injected: dict[int, int] = {}
        self.settled: dict[int, int] = {}
        self.max_msg_bytes = 0
        self._size_cache: dict = {}
        self._last_sig = None
        self.stable_for = 0
        a, b = self.w.base_edge
        for i, p in enumerate((a, b)):
            self.poses[i] = Pose(p[0], p[1], self._heading())
            self.agents[i] = A.base_state(i)
        self.next_id = 2
        self.last_injected = None
        if trace is not None:
            from .scenario import scenario_to_dict
            self._write({"event": "start", "scenario": scenario_to_dict(scenario)})

    # -- bookkeeping ---------------------------------------------------------

    def _heading(self) -> float:
        return float(self.rng.uniform(0.0, 2.0 * math.pi))

    def _write(self, rec: dict):
        self.trace.write(json.dumps(rec, separators=(",", ":")) + "\n")

    def injection_point(self):
        (ax, ay), (bx, by) = self.w.base_edge
        nx, ny = self.w.unexplored_normal()
        d = INJECT_DEPTH * math.hypot(bx - ax, by - ay)
        return (0.5 * (ax + bx) + d * nx, 0.5 * (ay + by) + d * ny)

    def records(self):
        out = []
        for i in sorted(self.agents):
            out.extend(self.agents[i].owned)
        return out

    def positions(self):
        return {i: p.xy for i, p in self.poses.items()}

    def moving(self):
        return [i for i, s in self.agents.items() if s.fsm in A.MOVING]

    @property
    def deployed(self) -> bool:
        return self.next_id >= self.sc.n_robots and not self.moving()

    def _should_inject(self) -> bool:
        if self.next_id >= self.sc.n_robots:
            return False
        navs = sum(1 for s in self.agents.values() if s.fsm == A.NAV)
        if navs >= self.sc.max_navigators:
            return False
        if self.last_injected is not None and self.agents[self.last_injected].fsm == A.NAV:
            return False
        # do not send a robot into a network whose gradient is still settling
        return self.stable_for >= STABLE_ROUNDS and len(self.moving()) < self.sc.max_navigators

    def _inject(self):
        i = self.next_id
        self.next_id += 1
        x, y = self.injection_point()
        self.poses[i] = Pose(x, y, self._heading())
        self.agents[i] = A.navigator_state(i)
        self.injected[i] = self.round
        self.last_injected = i
        log.debug("round %d: injected robot %d", self.round, i)

    def _msg_size(self, msg) -> int:
        n = self._size_cache.get(msg)
        if n is None:
            n = len(encode(msg, self.sc.n_robots, self.spec.quantum))
            if len(self._size_cache) > 4096:
                self._size_cache.clear()
            self._size_cache[msg] = n
        return n

    # -- the round -------------------------------------------------------------

    def step(self):
        r = self.round
        adjacency, views = build_neighbor_graph(self.poses, self.spec, self.w, r, self.links)
        self.adjacency = adjacency
        new_agents, new_msgs, motions = {}, {}, {}
        for i in sorted(self.agents):
            inbox = {j: self.messages[j] for j in adjacency[i] if j in self.messages}
            state, msg, motion = A.step(self.agents[i], views[i], inbox, self.params)
            try:
                size = self._msg_size(msg)
            except MessageSizeError as e:
                raise MessageSizeError(f"round {r}, robot {i}: {e}") from e
            self.max_msg_bytes = max(self.max_msg_bytes, size)
            new_agents[i], new_msgs[i], motions[i] = state, msg, (motion, size)
            old = self.agents[i].fsm
            if state.fsm != old:
                self.transitions.append((r, i, old, state.fsm))
                if state.fsm in (A.FRONTIER, A.FRONTIER_WALL):
                    self.settled[i] = r
        if self.trace is not None:
            for i in sorted(new_agents):
                self._trace_robot(r, i, new_agents[i], adjacency[i], motions[i][1])
        dt = self.sc.dt
        for i in sorted(motions):
            m = motions[i][0]
            if m.heading is None or m.speed <= 0.0:
                continue
            turn = math.remainder(m.heading, 2.0 * math.pi)
            fwd = min(1.0, m.speed) * self.spec.speed
            self.poses[i] = integrate_motion(self.poses[i], (turn / dt, fwd), dt, self.spec, self.w)
        self.agents = new_agents
        self.messages = new_msgs
        sig = tuple((i, s.fsm, s.L, s.R, tuple((t.key, t.hop, t.depth, t.is_frontier) for t in s.owned))
                    for i, s in sorted(new_agents.items()))
        self.stable_for = self.stable_for + 1 if sig == self._last_sig else 0
        self._last_sig = sig
        if self.checks is not None:
            self.checks.run(self)
        self.round += 1
        if self._should_inject():
            self._inject()
        return self

    def _trace_robot(self, r, i, s, nbrs, size):
        p = self.poses[i]
        self._write({
            "round": r, "id": i, "state": s.fsm,
            "pose": [p.x, p.y, p.heading],
            "neighbors": list(nbrs),
            "fnbrs": [s.L, s.R],
            "owned_triangles": [{"key": list(t.key), "hop": t.hop, "frontier": t.is_frontier,
                                 "kind": t.kind, "wall_edges": sorted(map(list, t.wall_edges)),
                                 "created": t.created, "depth": t.depth} for t in s.owned],
            "msg_bytes": size,
        })

    @property
    def exhausted(self) -> bool:
        """Nothing left to expand: no triangle is flagged frontier."""
        records = self.records()
        return bool(records) and not any(r.is_frontier for r in records) and not any(
            s.fsm in (A.EXPAND, A.WALL) for s in self.agents.values())

    def finished(self) -> bool:
        return (self.deployed or self.exhausted) and self.stable_for >= STABLE_ROUNDS

    def run(self, max_rounds: int | None = None):
        limit = self.sc.max_rounds if max_rounds is None else max_rounds
        while self.round < limit and not self.finished():
            self.step()
        if self.trace is not None:
            self._write({"event": "end", "round": self.round, "finished": self.finished()})
        return self

    # -- analysis view ---------------------------------------------------------

    def snapshot(self) -> dict:
        records = self.records()
        return {
            "round": self.round,
            "n_robots": self.sc.n_robots,
            "positions": {str(i): list(p.xy) for i, p in sorted(self.poses.items())},
            "states": {str(i): s.fsm for i, s in sorted(self.agents.items())},
            "adjacency": {str(i): list(v) for i, v in sorted(self.adjacency.items())},
            "triangles": [record_to_dict(t) for t in records],
            "edges": [[list(c.edge), c.cls] for c in classify_edges(records)],
        }


def run_round(world: World) -> World:
    return world.step()


def record_to_dict(t) -> dict:
    return {"key": list(t.key), "owner": t.owner, "hop": t.hop, "frontier": t.is_frontier,
            "kind": t.kind, "wall_edges": sorted(map(list, t.wall_edges)), "via": t.via,
            "created": t.created, "depth": t.depth}


def record_from_dict(d: dict):
    from .tristore import TriangleRecord, edge_key
    return TriangleRecord(tri_key(*d["key"]), d["owner"], d.get("hop"), bool(d.get("frontier")),
                          d.get("kind", "expansion"),
                          frozenset(edge_key(*e) for e in d.get("wall_edges", ())),
                          d.get("via"), d.get("created", 0), d.get("depth"))


def simulate(scenario, trace=None, check=True, strict=True) -> World:
    return World(scenario, trace, check, strict).run()
