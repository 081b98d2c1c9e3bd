"""Seeded triangulation batch over the rect, L-room and hole scenarios.

Writes one CSV row per run: rounds, triangles, fatness, coverage and
how the run ended.  Usage:

    python scripts/batch_triangulation.py --runs 20 --out batch.csv
"""
import argparse
import csv
import time
from pathlib import Path

from matsim.navigation import Triangulation, coverage_metrics
from matsim.scenario import load_scenario
from matsim.sim import World

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
ENVIRONMENTS = ("rect", "lroom", "hole")
TEAM_SIZES = (8, 10, 12, 14, 16, 18, 20)
FIELDS = ("env", "n_robots", "seed", "rounds", "triangles", "deployed", "exhausted", "rho", "alpha",
          "covered_area", "coverage_fraction", "max_msg_bytes", "violations", "seconds")


def run_one(env, n, seed):
    sc = load_scenario(SCENARIOS / f"{env}.json").with_(n_robots=n, seed=seed)
    t0 = time.perf_counter()
    w = World(sc, strict=False).run()
    elapsed = time.perf_counter() - t0
    tri = Triangulation.from_world(w)
    cov = coverage_metrics(tri, w.w)
    return {"env": env, "n_robots": n, "seed": seed, "rounds": w.round, "triangles": len(tri.records),
            "deployed": int(w.deployed), "exhausted": int(w.exhausted), "rho": round(cov.rho, 4),
            "alpha": round(cov.alpha, 4), "covered_area": round(cov.covered_area, 4),
            "coverage_fraction": round(cov.coverage_fraction, 4), "max_msg_bytes": w.max_msg_bytes,
            "violations": len(w.checks.violations), "seconds": round(elapsed, 2)}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--out", default="batch.csv")
    args = p.parse_args()
    with open(args.out, "w", newline="") as f:
        out = csv.DictWriter(f, fieldnames=FIELDS, lineterminator="\n")
        out.writeheader()
        for i in range(args.runs):
            row = run_one(ENVIRONMENTS[i % 3], TEAM_SIZES[i % 7], i)
            out.writerow(row)
            print(f"{row['env']:5s} n={row['n_robots']:2d} seed={row['seed']:2d}: {row['triangles']} triangles, "
                  f"rho {row['rho']}, coverage {row['coverage_fraction']}, {row['seconds']} s")


if __name__ == "__main__":
    main()
