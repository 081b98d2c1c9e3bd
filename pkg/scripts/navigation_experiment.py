"""Navigation trials on the healthy triangulation.

Builds the triangulation from scenarios/healthy.json, runs random
start/goal trials and prints stretch, correctness and the c' margin.

    python scripts/navigation_experiment.py --trials 34 --seed 0
"""
import argparse
from pathlib import Path

import numpy as np

from matsim.cli import nav_rng
from matsim.navigation import Triangulation, navigation_correctness, run_navigation, stretch_bounds
from matsim.scenario import load_scenario
from matsim.sim import World

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default=str(SCENARIOS / "healthy.json"))
    p.add_argument("--trials", type=int, default=34)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    sc = load_scenario(args.scenario)
    w = World(sc).run()
    tri = Triangulation.from_world(w)
    fat = tri.fatness()
    c, c_prime = stretch_bounds(fat)
    trials = run_navigation(tri, sc.workspace, args.trials, nav_rng(args.seed), sc.robot.quantum)
    st = np.array([t.stretch for t in trials])
    print(f"{len(tri.records)} triangles, rho {fat.rho:.3f}, alpha {fat.alpha:.3f}, c {c:.1f}, c' {c_prime:.1f}")
    print(f"stretch {st.mean():.3f} +- {st.std():.3f} (max {st.max():.3f}), "
          f"correctness {navigation_correctness(trials):.3f}")
    print(f"worst d_pT / (c' d_p): {max(t.d_pT / (c_prime * t.d_p) for t in trials):.4f}")


if __name__ == "__main__":
    main()
