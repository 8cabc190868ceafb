"""Simulated human policies and the bandit harness for convention learning.

Three operator models: Direct always aims at its goal, AdaptiveMimic adopts the
robot's demonstrated motions across interactions (and explores after repeated
failures), Explorer treats the discrete inputs as bandit arms. The bandit
harness measures cumulative incorrect inputs with and without the robot
demonstrating the correct input after mistakes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .world import Scenario, State, Task

INTERVENTION_THRESHOLD = 0.35  # fraction of a_max; matches the UI's pulse cue


def _direct_action(s: State, task: Task, a_max: float) -> np.ndarray:
    d = task.goal - s.position
    n = np.linalg.norm(d)
    if n == 0.0:
        return np.zeros(2)
    return a_max * d / n


def _clip_speed(a: np.ndarray, a_max: float) -> np.ndarray:
    n = np.linalg.norm(a)
    if n > a_max:
        return a * (a_max / n)
    return a


@dataclass
class Direct:
    """Aims straight at the goal at full speed."""

    def begin_episode(self, ctx: int, scenario: Scenario, rng) -> None:
        pass

    def act(self, s: State, task: Task, last_a_r, scenario: Scenario, rng) -> np.ndarray:
        return _direct_action(s, task, scenario.a_max)

    def end_episode(self, ctx: int, success: bool, last_intervention,
                    own_modal, scenario: Scenario) -> None:
        pass

    def pull(self, n_arms: int, ctx: int, rng) -> int:
        return 0

    def bandit_feedback(self, ctx: int, arm: int, correct: bool, revealed) -> None:
        pass


@dataclass
class AdaptiveMimic:
    """Remembers demonstrated inputs per task and replays them in later episodes.

    Replay probability grows linearly with the number of consolidated
    observations (min(1, learn_rate * n)). Without a memory the operator aims
    straight at the goal with Gaussian jitter, which puts nonzero probability
    on every discrete input. Repeated failures trigger a held random input for
    the whole next episode.
    """
    learn_rate: float = 0.5
    noise: float = 0.05
    explore_rate: float = 0.8
    memory: dict = field(default_factory=dict)        # ctx -> action vector
    n_obs: dict = field(default_factory=dict)         # ctx -> consolidation count
    consec_fail: dict = field(default_factory=dict)   # ctx -> consecutive failures
    arm_memory: dict = field(default_factory=dict)    # ctx -> remembered arm
    _held: np.ndarray | None = None

    def __post_init__(self):
        if not (self.noise > 0.0):
            raise ValueError("AdaptiveMimic noise must be > 0 so every input stays reachable")

    def _strength(self, ctx: int) -> float:
        return min(1.0, self.learn_rate * self.n_obs.get(ctx, 0))

    def begin_episode(self, ctx: int, scenario: Scenario, rng) -> None:
        self._held = None
        fails = self.consec_fail.get(ctx, 0)
        if fails >= 1 and rng.random() < min(1.0, self.explore_rate * fails):
            nonzero = [a for a in scenario.action_set if np.linalg.norm(a) > 1e-12]
            self._held = nonzero[int(rng.integers(len(nonzero)))]

    def act(self, s: State, task: Task, last_a_r, scenario: Scenario, rng) -> np.ndarray:
        ctx = task.id
        if self._held is not None:
            return self._held
        if ctx in self.memory and rng.random() < self._strength(ctx):
            return self.memory[ctx]
        a = _direct_action(s, task, scenario.a_max)
        a = a + self.noise * scenario.a_max * rng.standard_normal(2)
        return _clip_speed(a, scenario.a_max)

    def observe(self, ctx: int, a_r: np.ndarray, scenario: Scenario) -> None:
        """Consolidate a demonstrated motion into memory for this task."""
        self.memory[ctx] = scenario.action_set[scenario.snap_action(a_r)]
        self.n_obs[ctx] = self.n_obs.get(ctx, 0) + 1

    def end_episode(self, ctx: int, success: bool, last_intervention,
                    own_modal, scenario: Scenario) -> None:
        if success:
            self.consec_fail[ctx] = 0
            pick = last_intervention if last_intervention is not None else own_modal
            if pick is not None:
                self.observe(ctx, pick, scenario)
        else:
            self.consec_fail[ctx] = self.consec_fail.get(ctx, 0) + 1
            n = self.n_obs.get(ctx, 0)
            if n > 0:
                self.n_obs[ctx] = n - 1
                if self.n_obs[ctx] == 0:
                    self.memory.pop(ctx, None)

    # --- bandit interface ---

    def pull(self, n_arms: int, ctx: int, rng) -> int:
        if ctx in self.arm_memory and rng.random() < self._strength(ctx):
            return self.arm_memory[ctx]
        if rng.random() < self.noise:
            return int(rng.integers(n_arms))
        return 0  # the straight-at-goal input

    def bandit_feedback(self, ctx: int, arm: int, correct: bool, revealed) -> None:
        if correct:
            self.arm_memory[ctx] = arm
            self.n_obs[ctx] = self.n_obs.get(ctx, 0) + 1
        elif revealed is not None:
            self.arm_memory[ctx] = revealed
            self.n_obs[ctx] = self.n_obs.get(ctx, 0) + 1


@dataclass
class Explorer:
    """Searches the discrete inputs, rewarded when the robot assists correctly."""
    strategy: str = "epsilon_greedy"   # uniform | epsilon_greedy
    eps_explore: float = 0.1
    pulls: dict = field(default_factory=dict)     # ctx -> per-arm pull counts
    wins: dict = field(default_factory=dict)      # ctx -> per-arm success counts
    _last_arm: int = 0

    def begin_episode(self, ctx: int, scenario: Scenario, rng) -> None:
        pass

    def act(self, s: State, task: Task, last_a_r, scenario: Scenario, rng) -> np.ndarray:
        arm = self.pull(len(scenario.action_set), task.id, rng)
        return scenario.action_set[arm]

    def end_episode(self, ctx: int, success: bool, last_intervention,
                    own_modal, scenario: Scenario) -> None:
        pass

    def episode_feedback(self, ctx: int, correct: bool) -> None:
        self.bandit_feedback(ctx, self._last_arm, correct, None)

    def pull(self, n_arms: int, ctx: int, rng) -> int:
        if ctx not in self.pulls:
            self.pulls[ctx] = np.zeros(n_arms)
            self.wins[ctx] = np.zeros(n_arms)
        if self.strategy == "uniform":
            arm = int(rng.integers(n_arms))
        elif self.strategy == "epsilon_greedy":
            if rng.random() < self.eps_explore:
                arm = int(rng.integers(n_arms))
            else:
                pulls = self.pulls[ctx]
                rates = np.where(pulls > 0, self.wins[ctx] / np.maximum(pulls, 1), 0.0)
                arm = int(np.argmax(rates))
        else:
            raise ValueError(f"unknown explorer strategy {self.strategy!r}")
        self._last_arm = arm
        return arm

    def bandit_feedback(self, ctx: int, arm: int, correct: bool, revealed) -> None:
        self.pulls[ctx][arm] += 1
        self.wins[ctx][arm] += 1.0 if correct else 0.0


HumanModel = Direct | AdaptiveMimic | Explorer


def build_human(spec: dict) -> HumanModel:
    kind = spec.get("type", "direct")
    if kind == "direct":
        return Direct()
    if kind == "adaptive_mimic":
        return AdaptiveMimic(learn_rate=float(spec.get("learn_rate", 0.5)),
                             noise=float(spec.get("noise", 0.05)),
                             explore_rate=float(spec.get("explore_rate", 0.8)))
    if kind == "explorer":
        return Explorer(strategy=spec.get("strategy", "epsilon_greedy"),
                        eps_explore=float(spec.get("eps_explore", 0.1)))
    raise ValueError(f"unknown human model type {kind!r}")


def human_act(m: HumanModel, s: State, task: Task, last_a_r,
              scenario: Scenario, rng) -> np.ndarray:
    """Commanded velocity of the simulated operator for the current tick."""
    return m.act(s, task, last_a_r, scenario, rng)


# --- bandit abstraction ------------------------------------------------------


@dataclass(frozen=True)
class BanditInstance:
    n_arms: int
    correct_arm: int
    horizon: int

    def __post_init__(self):
        if self.n_arms < 1:
            raise ValueError("n_arms must be >= 1")
        if not (0 <= self.correct_arm < self.n_arms):
            raise ValueError("correct_arm out of range")


@dataclass
class RegretTrace:
    """Cumulative incorrect-input counts; reg[k] covers interactions 1..k."""
    reg: np.ndarray  # (horizon + 1,), reg[0] == 0, increments in {0, 1}
    seed: int | None = None


def run_bandit(instance: BanditInstance, m: HumanModel, revealing: bool,
               rng) -> RegretTrace:
    """One bandit run; with revealing, every incorrect pull shows the correct arm."""
    reg = np.zeros(instance.horizon + 1, dtype=int)
    ctx = 0
    for k in range(1, instance.horizon + 1):
        arm = m.pull(instance.n_arms, ctx, rng) if instance.n_arms > 1 else 0
        correct = arm == instance.correct_arm
        reg[k] = reg[k - 1] + (0 if correct else 1)
        revealed = instance.correct_arm if (revealing and not correct) else None
        m.bandit_feedback(ctx, arm, correct, revealed)
    return RegretTrace(reg=reg)


def regret_fit(traces: list[RegretTrace], burn_frac: float = 0.1) -> dict:
    """Compare constant vs a + c*log(k) fits on the mean trace.

    The fit window skips an initial burn-in so the asymptotic shape decides;
    model selection uses BIC since the log model nests the constant one.
    """
    if len(traces) < 30:
        raise ValueError(f"need at least 30 traces, got {len(traces)}")
    lengths = {len(t.reg) for t in traces}
    if len(lengths) != 1:
        raise ValueError("traces must share a horizon")
    mean = np.mean([t.reg for t in traces], axis=0)
    horizon = len(mean) - 1
    k0 = max(1, int(burn_frac * horizon))
    ks = np.arange(k0, horizon + 1)
    y = mean[k0:]
    n = len(y)

    c_const = float(np.mean(y))
    ss_const = float(np.sum((y - c_const) ** 2))

    design = np.stack([np.ones_like(ks, dtype=float), np.log(ks)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    ss_log = float(np.sum((y - design @ coef) ** 2))

    ss_tot = ss_const  # residual around the mean
    r2_const = 0.0
    r2_log = 1.0 - ss_log / ss_tot if ss_tot > 0 else 0.0
    tiny = 1e-300
    bic_const = n * np.log(max(ss_const, tiny) / n) + 1 * np.log(n)
    bic_log = n * np.log(max(ss_log, tiny) / n) + 2 * np.log(n)

    if bic_const <= bic_log:
        return {"model": "constant", "params": {"c": c_const},
                "goodness": {"r2_constant": r2_const, "r2_log": r2_log,
                             "bic_constant": float(bic_const), "bic_log": float(bic_log)}}
    return {"model": "logarithmic", "params": {"a": float(coef[0]), "c": float(coef[1])},
            "goodness": {"r2_constant": r2_const, "r2_log": r2_log,
                         "bic_constant": float(bic_const), "bic_log": float(bic_log)}}
