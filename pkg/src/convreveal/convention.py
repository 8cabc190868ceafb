"""Human-input likelihood models over the discrete action set (the robot's convention).

Each variant turns (state, task) into a probability distribution over the
scenario's K discrete actions. A small uniform floor is mixed in so no input
ever has zero likelihood and the belief can always recover.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .value import QTable, q_all
from .world import Scenario, State, Task


def _floor_mix(p: np.ndarray, floor: float) -> np.ndarray:
    k = len(p)
    return (1.0 - floor) * p + floor / k


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


@dataclass(frozen=True)
class Boltzmann:
    """Input probability exponential in the input's action value for the task."""
    lam: float = 5.0
    floor: float = 1e-3

    def action_distribution(self, s: State, task: Task, scenario: Scenario,
                            qtables) -> np.ndarray:
        if qtables is None:
            raise ValueError("boltzmann convention needs per-task q-tables")
        qs = q_all(qtables[task.id], s)
        z = self.lam * qs
        z = z - z.max()
        p = np.exp(z)
        p = p / p.sum()
        return _floor_mix(p, self.floor)


@dataclass(frozen=True)
class Cosine:
    """Input probability exponential in the cosine between input and goal direction.

    The zero action has no direction; it keeps the uniform share 1/K.
    """
    kappa: float = 5.0
    floor: float = 1e-3

    def action_distribution(self, s: State, task: Task, scenario: Scenario,
                            qtables=None) -> np.ndarray:
        actions = scenario.action_set
        k = len(actions)
        goal_dir = task.goal - s.position
        gn = np.linalg.norm(goal_dir)
        if gn == 0.0:
            return np.full(k, 1.0 / k)
        norms = np.linalg.norm(actions, axis=1)
        nonzero = norms > 1e-12
        cos = np.zeros(k)
        cos[nonzero] = (actions[nonzero] @ goal_dir) / (norms[nonzero] * gn)
        w = np.exp(self.kappa * (cos - cos[nonzero].max()))
        w[~nonzero] = 0.0
        p = np.zeros(k)
        n_zero = int(np.count_nonzero(~nonzero))
        p[~nonzero] = 1.0 / k
        p[nonzero] = (1.0 - n_zero / k) * w[nonzero] / w[nonzero].sum()
        return _floor_mix(p, self.floor)


@dataclass(frozen=True)
class MagnitudeCoded:
    """Input magnitude along a fixed axis indicates the task.

    Task 0 is signalled by projections inside small_band, task 1 by
    projections inside large_band; band membership is softened by sharpness.
    """
    small_band: tuple[float, float]
    large_band: tuple[float, float]
    axis: tuple[float, float] = (1.0, 0.0)
    sharpness: float = 50.0
    floor: float = 1e-3

    def action_distribution(self, s: State, task: Task, scenario: Scenario,
                            qtables=None) -> np.ndarray:
        if task.id not in (0, 1):
            raise ValueError("magnitude_coded convention supports task ids 0 and 1 only")
        actions = scenario.action_set
        ax = np.asarray(self.axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        m = np.abs(actions @ ax)
        lo, hi = self.small_band if task.id == 0 else self.large_band
        member = _sigmoid(self.sharpness * (m - lo)) * _sigmoid(self.sharpness * (hi - m))
        score = member + 1e-9
        p = score / score.sum()
        return _floor_mix(p, self.floor)


Convention = Boltzmann | Cosine | MagnitudeCoded


def build_convention(spec: dict) -> Convention:
    """Construct a convention from its scenario config block."""
    kind = spec.get("type")
    floor = float(spec.get("floor", 1e-3))
    if not (0.0 < floor < 1.0):
        raise ValueError("convention floor must be in (0, 1)")
    if kind == "boltzmann":
        lam = float(spec.get("lambda", spec.get("lam", 5.0)))
        if lam <= 0:
            raise ValueError("boltzmann lambda must be > 0")
        return Boltzmann(lam=lam, floor=floor)
    if kind == "cosine":
        kappa = float(spec.get("kappa", 5.0))
        if kappa <= 0:
            raise ValueError("cosine kappa must be > 0")
        return Cosine(kappa=kappa, floor=floor)
    if kind == "magnitude_coded":
        small = tuple(float(v) for v in spec["small_band"])
        large = tuple(float(v) for v in spec["large_band"])
        axis = tuple(float(v) for v in spec.get("axis", (1.0, 0.0)))
        sharpness = float(spec.get("sharpness", 50.0))
        if sharpness <= 0:
            raise ValueError("magnitude_coded sharpness must be > 0")
        return MagnitudeCoded(small_band=small, large_band=large, axis=axis,
                              sharpness=sharpness, floor=floor)
    raise ValueError(f"unknown convention type {kind!r}")


def likelihood(c: Convention, s: State, a: np.ndarray, task: Task,
               scenario: Scenario, qtables=None) -> float:
    """P(a | s, task) for a discrete action a under convention c."""
    dist = c.action_distribution(s, task, scenario, qtables)
    d = np.abs(scenario.action_set - np.asarray(a, dtype=float)).max(axis=1)
    k = int(np.argmin(d))
    if d[k] > 1e-12:
        raise ValueError(f"action {np.asarray(a)} not in the scenario action set")
    return float(dist[k])


def likelihood_vector(c: Convention, s: State, a: np.ndarray, tasks: list[Task],
                      scenario: Scenario, qtables=None) -> np.ndarray:
    """Per-task likelihood of one action: element j is likelihood under tasks[j]."""
    return np.array([likelihood(c, s, a, t, scenario, qtables) for t in tasks])


def top_action_index(c: Convention, s: State, task: Task, scenario: Scenario,
                     qtables=None) -> int:
    """Index of the action the convention considers most likely for the task."""
    return int(np.argmax(c.action_distribution(s, task, scenario, qtables)))
