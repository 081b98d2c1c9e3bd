import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from matsim.scenario import load_scenario
from matsim.sim import World
from matsim.tristore import check_owner_connectivity, check_owner_lemma, extract_dual_graph

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"

ENVIRONMENTS = ("rect", "lroom", "hole")
TEAM_SIZES = (8, 10, 12, 14, 16, 18, 20)
BATCH_ROUNDS = 5000


def scenario(name, **kw):
    sc = load_scenario(SCENARIOS / f"{name}.json")
    return sc.with_(**kw) if kw else sc


def batch_plan(count=20):
    """(environment, n_robots, seed) of the seeded acceptance batch."""
    return [(ENVIRONMENTS[i % 3], TEAM_SIZES[i % 7], i) for i in range(count)]


def bfs(adj, sources):
    """Plain BFS over an adjacency dict from a set of sources."""
    dist = {s: 0 for s in sources}
    q = deque(sources)
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def dual_diameter(dual):
    return max((max(bfs(dual.adj, [k]).values()) for k in dual.vertices), default=0)


def hop_oracle(records):
    dual = extract_dual_graph(records)
    return bfs(dual.adj, [r.key for r in records if r.is_frontier])


@dataclass
class BatchRun:
    env: str
    n: int
    seed: int
    world: World
    rounds: int
    lemma_violations: list = field(default_factory=list)
    connectivity_violations: list = field(default_factory=list)
    # first round after which the team stopped changing (deploy or exhaustion)
    settled_round: int | None = None
    # last round at which announced hops differed from the BFS oracle
    last_hop_mismatch: int | None = None
    diameter: int = 0


def run_batch_member(env, n, seed):
    """Run one scenario, checking ownership invariants after every round."""
    sc = scenario(env, n_robots=n, seed=seed, max_rounds=BATCH_ROUNDS)
    w = World(sc, strict=False)
    run = BatchRun(env, n, seed, w, 0)
    while w.round < BATCH_ROUNDS and not w.finished():
        w.step()
        recs = w.records()
        if check_owner_lemma(recs):
            run.lemma_violations.append(w.round)
        if check_owner_connectivity(recs, w.adjacency):
            run.connectivity_violations.append(w.round)
        if w.deployed or w.exhausted:
            if run.settled_round is None:
                run.settled_round = w.round
            oracle = hop_oracle(recs)
            if any(r.hop != oracle.get(r.key) for r in recs):
                run.last_hop_mismatch = w.round
        else:
            run.settled_round = None
    run.rounds = w.round
    run.diameter = dual_diameter(extract_dual_graph(w.records()))
    return run


@pytest.fixture(scope="session")
def batch():
    t0 = time.perf_counter()
    runs = [run_batch_member(*p) for p in batch_plan()]
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="session")
def rect_world():
    return World(scenario("rect")).run()


@pytest.fixture(scope="session")
def healthy_world():
    t0 = time.perf_counter()
    w = World(scenario("healthy")).run()
    return w, time.perf_counter() - t0
