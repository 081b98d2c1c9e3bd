"""Command-line driver: ``triangulate``, ``navigate`` and ``metrics``.

Exit codes: 0 success, 1 bad input (scenario, snapshot or trace), 2 a
checked property failed (invariant violation, disconnected dual graph).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import navigation as N
from .scenario import ScenarioError, load_scenario, scenario_from_dict, scenario_to_dict
from .sim import InvariantViolation, World, record_from_dict

log = logging.getLogger("matsim")

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2
NAV_STREAM = 0x6E6176          # sub-seed stream for navigation trials
METRIC_FIELDS = ("trial", "n_robots", "covered_area", "coverage_fraction", "rho", "alpha",
                 "mean_stretch", "max_stretch", "c", "c_prime")
TRIAL_FIELDS = ("trial", "start_key", "goal_key", "hops", "d_p", "d_pT", "stretch",
                "trajectory", "trajectory_stretch", "moves", "good_moves", "reached", "c_prime_ok")


def _setup_logging():
    level = os.environ.get("MAT_LOG_LEVEL", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def _write_csv(path: Path, fields, rows):
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 12))
    return x


def analysis_bundle(tri: N.Triangulation, workspace, n_robots: int, trials=()) -> dict:
    """Coverage, fatness and (optionally) stretch for one triangulation."""
    cov = N.coverage_metrics(tri, workspace)
    fat = tri.fatness()
    c, c_prime = N.stretch_bounds(fat) if fat.alpha > 0 else (math.inf, math.inf)
    stretches = [t.stretch for t in trials]
    return {
        "coverage": cov,
        "row": {
            "trial": len(trials), "n_robots": n_robots,
            "covered_area": cov.covered_area, "coverage_fraction": cov.coverage_fraction,
            "rho": fat.rho, "alpha": fat.alpha,
            "mean_stretch": float(np.mean(stretches)) if stretches else None,
            "max_stretch": max(stretches) if stretches else None,
            "c": c, "c_prime": c_prime,
        },
    }


def write_analysis(out: Path, bundle: dict):
    cov = bundle["coverage"]
    _write_csv(out / "metrics.csv", METRIC_FIELDS, [{k: _fmt(v) for k, v in bundle["row"].items()}])
    _write_csv(out / "triangles.csv", ("key", "kind", "area", "min_angle", "maxmin_ratio"),
               [{"key": "-".join(map(str, t.key)), "kind": t.kind, "area": _fmt(t.area),
                 "min_angle": _fmt(t.min_angle), "maxmin_ratio": _fmt(t.maxmin_ratio)}
                for t in cov.triangles])
    rows = []
    for name, h in cov.histograms.items():
        for lo, hi, n in zip(h["edges"], h["edges"][1:], h["counts"]):
            rows.append({"metric": name, "bin_lo": _fmt(lo), "bin_hi": _fmt(hi), "count": n})
    _write_csv(out / "histograms.csv", ("metric", "bin_lo", "bin_hi", "count"), rows)
    _write_csv(out / "coverage.csv", ("part", "area"),
               [{"part": "covered", "area": _fmt(cov.covered_area)},
                {"part": "pockets", "area": _fmt(cov.pocket_area)},
                {"part": "unexplored", "area": _fmt(cov.unexplored_area)}])


# -- triangulate ---------------------------------------------------------------

def cmd_triangulate(args) -> int:
    try:
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            sc = sc.with_(seed=args.seed)
        if args.rounds is not None:
            sc = sc.with_(max_rounds=args.rounds)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "trace.jsonl").open("w") as trace:
        world = World(sc, trace=trace)
        try:
            world.run()
        except InvariantViolation as e:
            print(f"invariant violation: {e}", file=sys.stderr)
            return EXIT_CHECK
    snap = world.snapshot()
    snap["scenario"] = scenario_to_dict(sc)
    (out / "snapshot.json").write_text(json.dumps(snap, indent=1) + "\n")
    if not world.finished():
        log.warning("stopped at max_rounds=%d before the team finished", sc.max_rounds)
    if world.records():
        write_analysis(out, analysis_bundle(N.Triangulation.from_world(world), sc.workspace, sc.n_robots))
    print(f"{sc.name or args.scenario}: {world.round} rounds, {len(world.records())} triangles, "
          f"finished={world.finished()}")
    return EXIT_OK


# -- navigate -------------------------------------------------------------------

def load_snapshot(path):
    try:
        snap = json.loads(Path(path).read_text())
        sc = scenario_from_dict({k: v for k, v in snap["scenario"].items()})
        tri = N.Triangulation.from_snapshot(snap)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"cannot read snapshot {path}: {e}") from e
    return snap, sc, tri


def nav_rng(seed: int) -> np.random.Generator:
    """Navigation randomness, independent of the triangulation's stream."""
    return np.random.default_rng(np.random.SeedSequence([seed, NAV_STREAM]))


def cmd_navigate(args) -> int:
    try:
        snap, sc, tri = load_snapshot(args.snapshot)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    if len(tri.keys) < 2 or len(N.dual_bfs(tri.dual, tri.keys[0])) != len(tri.keys):
        print("error: dual graph is disconnected or too small", file=sys.stderr)
        return EXIT_CHECK
    trials = N.run_navigation(tri, sc.workspace, args.trials, nav_rng(args.seed), sc.robot.quantum)
    bundle = analysis_bundle(tri, sc.workspace, sc.n_robots, trials)
    c_prime = bundle["row"]["c_prime"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_analysis(out, bundle)
    _write_csv(out / "stretch.csv", TRIAL_FIELDS, [{
        "trial": i, "start_key": "-".join(map(str, t.start_key)), "goal_key": "-".join(map(str, t.goal_key)),
        "hops": t.hops, "d_p": _fmt(t.d_p), "d_pT": _fmt(t.d_pT), "stretch": _fmt(t.stretch),
        "trajectory": _fmt(t.trajectory), "trajectory_stretch": _fmt(t.trajectory_stretch),
        "moves": t.moves, "good_moves": t.good_moves, "reached": int(t.reached),
        "c_prime_ok": int(t.d_pT <= c_prime * t.d_p + 1e-9)} for i, t in enumerate(trials)])
    st = [t.stretch for t in trials]
    print(f"{len(trials)} trials: mean stretch {np.mean(st):.3f} +- {np.std(st):.3f}, "
          f"correctness {N.navigation_correctness(trials):.3f}")
    return EXIT_OK


# -- metrics ----------------------------------------------------------------------

class TraceError(ValueError):
    pass


def read_trace(path):
    """Scenario and final per-robot records of a complete trace."""
    scenario, last, end = None, {}, None
    try:
        with Path(path).open() as f:
            for n, line in enumerate(f, 1):
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as e:
                    raise TraceError(f"line {n}: {e}") from e
                if rec.get("event") == "start":
                    scenario = scenario_from_dict(rec["scenario"])
                elif rec.get("event") == "end":
                    end = rec
                else:
                    last[rec["id"]] = rec
    except OSError as e:
        raise TraceError(str(e)) from e
    if scenario is None or end is None:
        raise TraceError("trace is truncated (missing start or end event)")
    return scenario, last


def triangulation_from_trace(last: dict) -> N.Triangulation:
    positions = {i: tuple(r["pose"][:2]) for i, r in last.items()}
    records = []
    for i in sorted(last):
        for t in last[i]["owned_triangles"]:
            records.append(record_from_dict(dict(t, owner=i)))
    return N.Triangulation(records, positions)


def cmd_metrics(args) -> int:
    try:
        sc, last = read_trace(args.trace)
    except (TraceError, ScenarioError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    tri = triangulation_from_trace(last)
    if not tri.records:
        print("error: trace holds no triangles", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = analysis_bundle(tri, sc.workspace, sc.n_robots)
    write_analysis(out, bundle)
    row = bundle["row"]
    print(f"{len(tri.records)} triangles, covered {row['covered_area']:.3f} m^2, "
          f"coverage {row['coverage_fraction']:.3f}, rho {row['rho']:.2f}, alpha {row['alpha']:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("triangulate", help="run a scenario and write trace, snapshot and metrics")
    t.add_argument("--scenario", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--rounds", type=int, help="override max_rounds")
    t.add_argument("--seed", type=int, help="override the scenario seed")
    t.set_defaults(func=cmd_triangulate)
    n = sub.add_parser("navigate", help="navigation trials on a saved snapshot")
    n.add_argument("--snapshot", required=True)
    n.add_argument("--trials", type=int, default=34)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_navigate)
    m = sub.add_parser("metrics", help="coverage and quality histograms from a trace")
    m.add_argument("--trace", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
