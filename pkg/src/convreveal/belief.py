"""Task belief maintained in log space and updated recursively from human inputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convention import Convention
from .world import Scenario, State, Task


def _log_normalize(lw: np.ndarray) -> np.ndarray:
    m = lw.max()
    return lw - (m + np.log(np.exp(lw - m).sum()))


@dataclass(frozen=True)
class Belief:
    log_weights: np.ndarray  # normalized: logsumexp == 0

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def prob(self, task_id: int) -> float:
        return float(np.exp(self.log_weights[task_id]))


def init_belief(tasks: list[Task]) -> Belief:
    """Uniform prior over the task set."""
    n = len(tasks)
    if n < 1:
        raise ValueError("cannot build a belief over an empty task list")
    return Belief(log_weights=np.full(n, -np.log(n)))


def update(b: Belief, s: State, a_h: np.ndarray, c: Convention, tasks: list[Task],
           scenario: Scenario, qtables=None) -> Belief:
    """Recursive Bayes step: posterior(theta) proportional to likelihood * prior.

    Continuous inputs are snapped to the nearest discrete action before the
    likelihood is evaluated; the work happens in log space so long episodes
    cannot underflow.
    """
    k = scenario.snap_action(a_h)
    log_lik = np.empty(len(tasks))
    for j, task in enumerate(tasks):
        dist = c.action_distribution(s, task, scenario, qtables)
        log_lik[j] = np.log(dist[k])
    lw = b.log_weights + log_lik
    return Belief(log_weights=_log_normalize(lw))


def map_task(b: Belief, tasks: list[Task]) -> Task:
    """Most likely task; exact ties resolve to the lowest task id."""
    return tasks[int(np.argmax(b.log_weights))]
