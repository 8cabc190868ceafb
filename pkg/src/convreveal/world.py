"""2D shared-control workspace: states, tasks, blended dynamics, scenario loading."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml


class ScenarioError(ValueError):
    """A scenario document failed to parse or violated an invariant."""


@dataclass(frozen=True)
class Task:
    id: int
    goal: np.ndarray     # (2,) position in workspace units
    radius: float        # capture radius, boundary inclusive


@dataclass(frozen=True)
class State:
    position: np.ndarray  # (2,)
    clamped: bool = False  # set when the last transition hit the workspace bounds


@dataclass
class Scenario:
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    tasks: list[Task]
    dt: float
    a_max: float
    blend_beta: float
    gamma: float
    action_set: np.ndarray                     # (K, 2) velocities, zero action included
    convention_spec: dict
    epsilon0: float
    rng_seed: int
    grid_resolution: int = 41
    blend_mode: str = "fixed"                  # fixed | confidence
    epsilon_mode: str = "constant"             # constant | distance_decay | performance
    human_model_spec: dict = field(default_factory=lambda: {"type": "direct"})
    start: tuple[float, float] | None = None
    max_ticks: int = 400

    @property
    def extent(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0, y1 - y0)

    def start_state(self) -> State:
        if self.start is not None:
            p = np.asarray(self.start, dtype=float)
        else:
            x0, y0, x1, y1 = self.bounds
            p = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
        return State(position=p)

    def clamp(self, p: np.ndarray) -> np.ndarray:
        x0, y0, x1, y1 = self.bounds
        return np.clip(p, [x0, y0], [x1, y1])

    def contains(self, p: np.ndarray) -> bool:
        x0, y0, x1, y1 = self.bounds
        return bool(x0 <= p[0] <= x1 and y0 <= p[1] <= y1)

    def snap_action(self, a: np.ndarray) -> int:
        """Index of the discrete action nearest (Euclidean) to a; ties to lowest index."""
        d = np.linalg.norm(self.action_set - np.asarray(a, dtype=float), axis=1)
        return int(np.argmin(d))

    def zero_action_index(self) -> int:
        norms = np.linalg.norm(self.action_set, axis=1)
        return int(np.argmin(norms))


def step(s: State, a_h: np.ndarray, a_r: np.ndarray, scenario: Scenario,
         beta: float | None = None) -> State:
    """One shared-control transition: s + dt * (beta*a_h + (1-beta)*a_r), clamped to bounds.

    Clamping is the only departure from the unconstrained update and is
    recorded on the returned state.
    """
    if beta is None:
        beta = scenario.blend_beta
    blended = beta * np.asarray(a_h, dtype=float) + (1.0 - beta) * np.asarray(a_r, dtype=float)
    raw = s.position + scenario.dt * blended
    clipped = scenario.clamp(raw)
    return State(position=clipped, clamped=bool(np.any(clipped != raw)))


def reached(s: State, task: Task) -> bool:
    """True iff the state is within the task's capture radius (boundary inclusive)."""
    return bool(np.linalg.norm(s.position - task.goal) <= task.radius)


def make_action_set(n_headings: int, magnitudes: list[float], a_max: float) -> np.ndarray:
    """Zero action first, then rings of n_headings directions per magnitude fraction."""
    rows = [np.zeros(2)]
    for m in magnitudes:
        angles = 2.0 * np.pi * np.arange(n_headings) / n_headings
        ring = m * a_max * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        rows.append(ring)
    return np.vstack(rows)


_REQUIRED_KEYS = ("bounds", "tasks", "dt", "a_max", "blend_beta", "gamma",
                  "convention_spec", "epsilon0", "rng_seed")
_CONVENTION_TYPES = ("boltzmann", "cosine", "magnitude_coded")
_BLEND_MODES = ("fixed", "confidence")
_EPSILON_MODES = ("constant", "distance_decay", "performance")


def _count_headings(action_set: np.ndarray) -> int:
    nonzero = action_set[np.linalg.norm(action_set, axis=1) > 1e-12]
    if len(nonzero) == 0:
        return 0
    angles = np.arctan2(nonzero[:, 1], nonzero[:, 0])
    return len(np.unique(np.round(angles, 9)))


def load_scenario(document: str) -> Scenario:
    """Parse and validate a scenario config document (YAML/JSON text)."""
    try:
        raw = yaml.safe_load(document)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ScenarioError(f"scenario parse error{where}: {e}") from e
    if not isinstance(raw, dict):
        raise ScenarioError("scenario document must be a mapping")
    return scenario_from_dict(raw)


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return load_scenario(f.read())


def scenario_from_dict(raw: dict) -> Scenario:
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ScenarioError(f"missing required key '{key}'")
    if "action_set" not in raw and not ("n_headings" in raw and "magnitudes" in raw):
        raise ScenarioError("need either 'action_set' or 'n_headings' + 'magnitudes'")

    bounds = raw["bounds"]
    if not (isinstance(bounds, (list, tuple)) and len(bounds) == 4):
        raise ScenarioError("bounds must be [xmin, ymin, xmax, ymax]")
    x0, y0, x1, y1 = (float(v) for v in bounds)
    if not (x1 > x0 and y1 > y0):
        raise ScenarioError("bounds must have positive extent")

    dt = float(raw["dt"])
    if dt <= 0:
        raise ScenarioError("dt must be > 0")
    a_max = float(raw["a_max"])
    if a_max <= 0:
        raise ScenarioError("a_max must be > 0")
    blend_beta = float(raw["blend_beta"])
    if not (0.0 <= blend_beta <= 1.0):
        raise ScenarioError("blend_beta out of range")
    gamma = float(raw["gamma"])
    if not (0.0 <= gamma < 1.0):
        raise ScenarioError("gamma out of range [0, 1)")
    epsilon0 = float(raw["epsilon0"])
    if epsilon0 < 0:
        raise ScenarioError("epsilon0 must be >= 0")

    default_radius = 0.05 * min(x1 - x0, y1 - y0)
    tasks_raw = raw["tasks"]
    if not isinstance(tasks_raw, list) or len(tasks_raw) < 2:
        raise ScenarioError("tasks: at least 2 tasks required")
    tasks = []
    for i, t in enumerate(tasks_raw):
        if "id" in t and int(t["id"]) != i:
            raise ScenarioError(f"tasks: ids must be contiguous from 0 (task {i} has id {t['id']})")
        goal = np.asarray(t["goal"], dtype=float)
        if goal.shape != (2,):
            raise ScenarioError(f"tasks[{i}].goal must be a 2-vector")
        if not (x0 <= goal[0] <= x1 and y0 <= goal[1] <= y1):
            raise ScenarioError(f"tasks[{i}].goal outside workspace bounds")
        radius = float(t.get("radius", default_radius))
        if radius <= 0:
            raise ScenarioError(f"tasks[{i}].radius must be > 0")
        tasks.append(Task(id=i, goal=goal, radius=radius))

    if "action_set" in raw:
        action_set = np.asarray(raw["action_set"], dtype=float)
        if action_set.ndim != 2 or action_set.shape[1] != 2:
            raise ScenarioError("action_set must be a list of 2-vectors")
    else:
        magnitudes = [float(m) for m in raw["magnitudes"]]
        if any(not (0.0 < m <= 1.0) for m in magnitudes):
            raise ScenarioError("magnitudes must be fractions of a_max in (0, 1]")
        action_set = make_action_set(int(raw["n_headings"]), magnitudes, a_max)
    norms = np.linalg.norm(action_set, axis=1)
    if norms.max() > a_max + 1e-9:
        raise ScenarioError("action_set contains velocities above a_max")
    if norms.min() > 1e-12:
        raise ScenarioError("action_set missing the zero action")
    if _count_headings(action_set) < 8:
        raise ScenarioError("action_set directions must cover at least 8 headings")

    conv = raw["convention_spec"]
    if not isinstance(conv, dict) or conv.get("type") not in _CONVENTION_TYPES:
        raise ScenarioError(f"convention_spec.type must be one of {_CONVENTION_TYPES}")
    if conv["type"] == "magnitude_coded" and len(tasks) != 2:
        raise ScenarioError("magnitude_coded convention requires exactly 2 tasks")

    blend_mode = raw.get("blend_mode", "fixed")
    if blend_mode not in _BLEND_MODES:
        raise ScenarioError(f"blend_mode must be one of {_BLEND_MODES}")
    epsilon_mode = raw.get("epsilon_mode", "constant")
    if epsilon_mode not in _EPSILON_MODES:
        raise ScenarioError(f"epsilon_mode must be one of {_EPSILON_MODES}")

    grid_resolution = int(raw.get("grid_resolution", 41))
    if grid_resolution < 3:
        raise ScenarioError("grid_resolution must be >= 3")

    start = raw.get("start")
    if start is not None:
        start = (float(start[0]), float(start[1]))
        if not (x0 <= start[0] <= x1 and y0 <= start[1] <= y1):
            raise ScenarioError("start outside workspace bounds")

    return Scenario(
        bounds=(x0, y0, x1, y1),
        tasks=tasks,
        dt=dt,
        a_max=a_max,
        blend_beta=blend_beta,
        gamma=gamma,
        action_set=action_set,
        convention_spec=dict(conv),
        epsilon0=epsilon0,
        rng_seed=int(raw["rng_seed"]),
        grid_resolution=grid_resolution,
        blend_mode=blend_mode,
        epsilon_mode=epsilon_mode,
        human_model_spec=dict(raw.get("human_model_spec", {"type": "direct"})),
        start=start,
        max_ticks=int(raw.get("max_ticks", 400)),
    )


def serialize_scenario(sc: Scenario) -> dict:
    """Plain-python dict covering everything that defines the scenario (round-trips)."""
    return {
        "bounds": [float(v) for v in sc.bounds],
        "tasks": [{"id": t.id, "goal": [float(t.goal[0]), float(t.goal[1])],
                   "radius": float(t.radius)} for t in sc.tasks],
        "dt": float(sc.dt),
        "a_max": float(sc.a_max),
        "blend_beta": float(sc.blend_beta),
        "gamma": float(sc.gamma),
        "action_set": [[float(a[0]), float(a[1])] for a in sc.action_set],
        "convention_spec": sc.convention_spec,
        "epsilon0": float(sc.epsilon0),
        "rng_seed": int(sc.rng_seed),
        "grid_resolution": int(sc.grid_resolution),
        "blend_mode": sc.blend_mode,
        "epsilon_mode": sc.epsilon_mode,
        "human_model_spec": sc.human_model_spec,
        "start": None if sc.start is None else [float(sc.start[0]), float(sc.start[1])],
        "max_ticks": int(sc.max_ticks),
    }


def scenario_hash(sc: Scenario) -> str:
    canon = yaml.safe_dump(serialize_scenario(sc), sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
