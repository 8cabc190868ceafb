"""Convention-revealing shared autonomy: a robot that infers the operator's task
from continuous inputs, assists toward it, and exaggerates its motion to teach
the most communicative inputs."""

from .belief import Belief, init_belief, map_task, update
from .convention import (Boltzmann, Convention, Cosine, MagnitudeCoded,
                         build_convention, likelihood, likelihood_vector)
from .reveal import (EpsilonSchedule, TickResult, TickSession, epsilon_at,
                     reveal_action)
from .runner import EpisodeLog, Metrics, belief_change, run_episode, run_experiment, success
from .simhuman import (AdaptiveMimic, BanditInstance, Direct, Explorer, RegretTrace,
                       build_human, human_act, regret_fit, run_bandit)
from .value import (QTable, cached_value_iteration, optimal_action, q_lookup,
                    v_lookup, value_iteration)
from .world import (Scenario, ScenarioError, State, Task, load_scenario,
                    load_scenario_file, reached, scenario_hash, step)

__all__ = [
    "Belief", "init_belief", "map_task", "update",
    "Boltzmann", "Convention", "Cosine", "MagnitudeCoded", "build_convention",
    "likelihood", "likelihood_vector",
    "EpsilonSchedule", "TickResult", "TickSession", "epsilon_at", "reveal_action",
    "EpisodeLog", "Metrics", "belief_change", "run_episode", "run_experiment", "success",
    "AdaptiveMimic", "BanditInstance", "Direct", "Explorer", "RegretTrace",
    "build_human", "human_act", "regret_fit", "run_bandit",
    "QTable", "cached_value_iteration", "optimal_action", "q_lookup", "v_lookup",
    "value_iteration",
    "Scenario", "ScenarioError", "State", "Task", "load_scenario",
    "load_scenario_file", "reached", "scenario_hash", "step",
]
