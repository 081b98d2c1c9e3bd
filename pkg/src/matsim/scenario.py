"""Scenario files: workspace, robot hardware, team size and run knobs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .agent import AgentParams
from .environment import RobotSpec, WorkspacePolygon, WorkspaceError


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    workspace: WorkspacePolygon
    robot: RobotSpec = RobotSpec()
    n_robots: int = 12
    seed: int = 0
    max_rounds: int = 20000
    agent: AgentParams = AgentParams()
    max_navigators: int = 1
    dt: float = 0.125
    name: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_robots < 3:
            raise ScenarioError(f"n_robots must be >= 3 (two base robots + one navigator), got {self.n_robots}")
        if self.max_rounds < 1:
            raise ScenarioError("max_rounds must be positive")
        if self.max_navigators < 1:
            raise ScenarioError("max_navigators must be >= 1")
        if not 0.0 <= self.seed < 2 ** 64:
            raise ScenarioError("seed must be a 64-bit unsigned integer")
        if self.dt <= 0 or self.robot.speed * self.dt >= self.robot.clearance:
            raise ScenarioError("dt must be positive and speed*dt below the wall clearance")
        if not 0.0 < self.agent.quality_k <= 2 * math.pi:
            raise ScenarioError("quality_k must lie in (0, 2*pi]")
        if not 0.0 < self.agent.goal_tol < math.pi / 3:
            raise ScenarioError("goal_tol must lie in (0, pi/3)")
        try:
            self.workspace.validate_base_edge(self.robot)
        except WorkspaceError as e:
            raise ScenarioError(str(e)) from e

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)


_ROBOT_KEYS = {"diameter", "r_max", "bearing_resolution", "wall_sense_range", "speed"}
_TOP_KEYS = {"outer", "holes", "base_edge", "robot", "n_robots", "seed", "max_rounds",
             "quality_k", "goal_tol", "max_navigators", "dt", "name", "description"}


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    for k in ("outer", "base_edge", "n_robots"):
        if k not in d:
            raise ScenarioError(f"missing required key {k!r}")
    robot = d.get("robot", {})
    bad = set(robot) - _ROBOT_KEYS
    if bad:
        raise ScenarioError(f"unknown robot keys: {sorted(bad)}")
    try:
        spec = RobotSpec(**{k: float(v) for k, v in robot.items()})
        w = WorkspacePolygon(tuple(map(tuple, d["outer"])),
                             tuple(tuple(map(tuple, h)) for h in d.get("holes", [])),
                             tuple(map(tuple, d["base_edge"])))
        params = AgentParams(quality_k=float(d.get("quality_k", AgentParams.quality_k)),
                             goal_tol=float(d.get("goal_tol", AgentParams.goal_tol)))
        n = d["n_robots"]
        if not isinstance(n, int):
            raise ScenarioError("n_robots must be an integer")
        return Scenario(w, spec, n, int(d.get("seed", 0)), int(d.get("max_rounds", 20000)), params,
                        int(d.get("max_navigators", 1)), float(d.get("dt", 0.125)),
                        str(d.get("name", "")))
    except ScenarioError:
        raise
    except (TypeError, ValueError) as e:
        raise ScenarioError(str(e)) from e


def load_scenario(path) -> Scenario:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}") from e
    return scenario_from_dict(d)


def scenario_to_dict(sc: Scenario) -> dict:
    w = sc.workspace
    return {
        "name": sc.name,
        "outer": [list(p) for p in w.outer],
        "holes": [[list(p) for p in h] for h in w.holes],
        "base_edge": [list(p) for p in w.base_edge],
        "robot": {"diameter": sc.robot.diameter, "r_max": sc.robot.r_max,
                  "bearing_resolution": sc.robot.bearing_resolution,
                  "wall_sense_range": sc.robot.wall_sense_range, "speed": sc.robot.speed},
        "n_robots": sc.n_robots, "seed": sc.seed, "max_rounds": sc.max_rounds,
        "quality_k": sc.agent.quality_k, "goal_tol": sc.agent.goal_tol,
        "max_navigators": sc.max_navigators, "dt": sc.dt,
    }
