"""Selection of robot actions that reveal the convention while staying near-optimal.

At each tick the robot decodes the most likely task, then picks the discrete
action maximizing the likelihood ratio of that task subject to a bound on the
action's value suboptimality. The allowed suboptimality follows a schedule.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import belief as belief_mod
from .convention import Convention, build_convention
from .value import QTable, optimal_action_index, q_all
from .world import Scenario, State, Task, reached, step

CONSTRAINT_TOL = 1e-9


@dataclass
class EpsilonSchedule:
    epsilon0: float
    mode: str = "constant"               # constant | distance_decay | performance
    start_state: State | None = None     # reference for distance_decay
    window: int = 10                     # performance mode history length
    recent: deque = field(default_factory=lambda: deque(maxlen=10))

    def bind_start(self, s: State) -> None:
        self.start_state = s
        self.recent = deque(maxlen=self.window)

    def record_confidence(self, max_belief: float) -> None:
        self.recent.append(max_belief)


def schedule_for(scenario: Scenario) -> EpsilonSchedule:
    return EpsilonSchedule(epsilon0=scenario.epsilon0, mode=scenario.epsilon_mode)


def epsilon_at(sched: EpsilonSchedule, s: State, task: Task, qt: QTable,
               n_tasks: int = 2) -> float:
    """Allowed suboptimality at s; never negative, zero inside the capture radius
    for the decaying mode."""
    if sched.mode == "constant":
        return sched.epsilon0
    if sched.mode == "distance_decay":
        if reached(s, task):
            return 0.0
        s0 = sched.start_state if sched.start_state is not None else s
        v0 = float(np.max(q_all(qt, s0)))
        if v0 >= 0.0:
            return 0.0
        v = float(np.max(q_all(qt, s)))
        ratio = min(max(v / v0, 0.0), 1.0)  # remaining cost-to-go, normalized
        return sched.epsilon0 * ratio
    if sched.mode == "performance":
        # scale down as the human's inputs become decisive (high belief peak)
        if not sched.recent:
            return sched.epsilon0
        conf = float(np.mean(sched.recent))
        uniform = 1.0 / n_tasks
        frac = (conf - uniform) / (1.0 - uniform) if n_tasks > 1 else 1.0
        return sched.epsilon0 * min(max(1.0 - frac, 0.0), 1.0)
    raise ValueError(f"unknown epsilon mode {sched.mode!r}")


@dataclass(frozen=True)
class TickResult:
    a_r_index: int
    a_r: np.ndarray
    theta_star: int
    epsilon_used: float
    constraint_slack: float   # V - Q at the chosen action
    objective: float          # likelihood ratio of the chosen action


def reveal_action(s: State, theta_star: Task, c: Convention, tasks: list[Task],
                  scenario: Scenario, qtables: list[QTable], epsilon: float) -> TickResult:
    """Exhaustive constrained argmax over the discrete action set.

    Feasible actions keep V - Q within epsilon (the greedy action always
    qualifies, so the feasible set is never empty). Among feasible actions the
    likelihood ratio for theta_star wins; ties prefer higher Q, then lower index.
    """
    qt = qtables[theta_star.id]
    qs = q_all(qt, s)
    v = float(np.max(qs))
    K = len(scenario.action_set)

    num = None
    den = np.zeros(K)
    for task in tasks:
        dist = c.action_distribution(s, task, scenario, qtables)
        den = den + dist
        if task.id == theta_star.id:
            num = dist
    obj = num / den

    best_k = -1
    best_obj = -np.inf
    best_q = -np.inf
    for k in range(K):
        slack = v - qs[k]
        if slack > epsilon + CONSTRAINT_TOL:
            continue
        if obj[k] > best_obj or (obj[k] == best_obj and qs[k] > best_q):
            best_k, best_obj, best_q = k, obj[k], qs[k]
    return TickResult(a_r_index=best_k, a_r=scenario.action_set[best_k],
                      theta_star=theta_star.id, epsilon_used=epsilon,
                      constraint_slack=float(v - qs[best_k]), objective=float(best_obj))


@dataclass
class TickRow:
    t: int
    s: tuple[float, float]
    a_h: tuple[float, float]
    a_r: tuple[float, float]
    belief: tuple[float, ...]
    epsilon: float
    theta_star: int


class TickSession:
    """Sequential per-episode loop: observe input, update belief, act, blend, log.

    The session never learns the human's true task; it works purely from the
    inputs it observes.
    """

    def __init__(self, scenario: Scenario, qtables: list[QTable],
                 convention: Convention | None = None, mode: str = "ours",
                 schedule: EpsilonSchedule | None = None):
        if mode not in ("ours", "no_assist", "unassisted"):
            raise ValueError(f"unknown mode {mode!r}")
        self.scenario = scenario
        self.qtables = qtables
        self.convention = convention or build_convention(scenario.convention_spec)
        self.mode = mode
        self.schedule = schedule or schedule_for(scenario)
        self.belief = belief_mod.init_belief(scenario.tasks)
        self.s = scenario.start_state()
        self.t = 0
        self.rows: list[TickRow] = []
        self.schedule.bind_start(self.s)

    def reached_task(self) -> Task | None:
        for task in self.scenario.tasks:
            if reached(self.s, task):
                return task
        return None

    def tick(self, a_h: np.ndarray) -> TickResult:
        sc = self.scenario
        a_h = np.asarray(a_h, dtype=float)

        if np.linalg.norm(a_h) > 0.0:  # idle input carries no intent signal
            self.belief = belief_mod.update(self.belief, self.s, a_h, self.convention,
                                            sc.tasks, sc, self.qtables)
        theta_star = belief_mod.map_task(self.belief, sc.tasks)
        self.schedule.record_confidence(float(self.belief.probabilities.max()))

        eps = epsilon_at(self.schedule, self.s, theta_star, self.qtables[theta_star.id],
                         n_tasks=len(sc.tasks))
        beta = sc.blend_beta
        if sc.blend_mode == "confidence":
            beta = float(self.belief.probabilities.max())

        if self.mode == "ours":
            res = reveal_action(self.s, theta_star, self.convention, sc.tasks, sc,
                                self.qtables, eps)
        elif self.mode == "no_assist":
            k = optimal_action_index(self.qtables[theta_star.id], self.s)
            qs = q_all(self.qtables[theta_star.id], self.s)
            res = TickResult(a_r_index=k, a_r=sc.action_set[k], theta_star=theta_star.id,
                             epsilon_used=0.0,
                             constraint_slack=float(np.max(qs) - qs[k]), objective=1.0)
        else:  # unassisted: robot observes only
            beta = 1.0
            kz = sc.zero_action_index()
            res = TickResult(a_r_index=kz, a_r=sc.action_set[kz], theta_star=theta_star.id,
                             epsilon_used=0.0, constraint_slack=0.0, objective=1.0)

        self.s = step(self.s, a_h, res.a_r, sc, beta=beta)
        self.rows.append(TickRow(
            t=self.t,
            s=(float(self.s.position[0]), float(self.s.position[1])),
            a_h=(float(a_h[0]), float(a_h[1])),
            a_r=(float(res.a_r[0]), float(res.a_r[1])),
            belief=tuple(float(p) for p in self.belief.probabilities),
            epsilon=float(eps),
            theta_star=res.theta_star,
        ))
        self.t += 1
        return res
