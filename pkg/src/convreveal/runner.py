"""Batch experiment driver: episodes, study-analog sweeps, metrics, persistence."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .convention import build_convention, top_action_index
from .reveal import TickRow, TickSession
from .simhuman import (INTERVENTION_THRESHOLD, AdaptiveMimic, Explorer, HumanModel,
                       build_human, human_act)
from .value import QTable, tables_for
from .world import Scenario, State, scenario_from_dict, scenario_hash

MODES = ("ours", "no_assist", "unassisted")


@dataclass
class EpisodeLog:
    scenario_hash: str
    mode: str
    seed: int
    theta_true: int
    rows: list[TickRow]
    outcome: dict  # reached: int | None, ticks, inputs, incorrect_inputs

    def to_json(self) -> str:
        obj = {
            "scenario": self.scenario_hash,
            "mode": self.mode,
            "seed": self.seed,
            "theta_true": self.theta_true,
            "outcome": self.outcome,
            "rows": [[r.t, r.s[0], r.s[1], r.a_h[0], r.a_h[1], r.a_r[0], r.a_r[1],
                      r.epsilon, r.theta_star, *r.belief] for r in self.rows],
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, line: str, n_tasks: int) -> "EpisodeLog":
        obj = json.loads(line)
        rows = []
        for r in obj["rows"]:
            rows.append(TickRow(t=int(r[0]), s=(r[1], r[2]), a_h=(r[3], r[4]),
                                a_r=(r[5], r[6]), epsilon=r[7], theta_star=int(r[8]),
                                belief=tuple(r[9:9 + n_tasks])))
        return cls(scenario_hash=obj["scenario"], mode=obj["mode"], seed=int(obj["seed"]),
                   theta_true=int(obj["theta_true"]), rows=rows, outcome=obj["outcome"])


@dataclass
class Metrics:
    success_rate: float
    belief_change: float
    mean_inputs: float


def nonzero_inputs(log: EpisodeLog) -> int:
    return sum(1 for r in log.rows if r.a_h != (0.0, 0.0))


def count_incorrect_inputs(rows: list[TickRow], theta_true: int, scenario: Scenario,
                           convention, qtables) -> int:
    """Ticks whose snapped input differs from the convention's top action for the
    true task. Computed after the fact so the live loop never sees theta_true."""
    task = scenario.tasks[theta_true]
    n = 0
    prev = scenario.start_state()
    for r in rows:
        a_h = np.array(r.a_h)
        if np.linalg.norm(a_h) > 0.0:
            best = top_action_index(convention, prev, task, scenario, qtables)
            if scenario.snap_action(a_h) != best:
                n += 1
        prev = State(position=np.array(r.s))
    return n


def run_episode(scenario: Scenario, mode: str, human: HumanModel, theta_true: int,
                seed: int, qtables: list[QTable] | None = None,
                convention=None) -> EpisodeLog:
    """One full interaction; ends on any capture or at the tick budget."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if qtables is None:
        qtables = tables_for(scenario)
    if convention is None:
        convention = build_convention(scenario.convention_spec)
    task = scenario.tasks[theta_true]
    rng = np.random.default_rng(seed)

    human.begin_episode(task.id, scenario, rng)
    sess = TickSession(scenario, qtables, convention=convention, mode=mode)
    last_a_r = None
    last_intervention = None
    input_counts: dict[int, int] = {}
    reached_task = None
    while sess.t < scenario.max_ticks:
        a_h = human_act(human, sess.s, task, last_a_r, scenario, rng)
        res = sess.tick(a_h)
        if np.linalg.norm(a_h) > 0.0:
            k = scenario.snap_action(a_h)
            input_counts[k] = input_counts.get(k, 0) + 1
            if np.linalg.norm(res.a_r - a_h) > INTERVENTION_THRESHOLD * scenario.a_max:
                last_intervention = res.a_r
        if isinstance(human, Explorer):
            to_goal = task.goal - sess.s.position
            human.episode_feedback(task.id, bool(res.a_r @ to_goal > 0.0))
        last_a_r = res.a_r
        reached_task = sess.reached_task()
        if reached_task is not None:
            break

    success = reached_task is not None and reached_task.id == task.id
    own_modal = None
    if input_counts:
        zero_k = scenario.zero_action_index()
        candidates = {k: c for k, c in input_counts.items() if k != zero_k}
        if candidates:
            best = min(sorted(candidates), key=lambda k: -candidates[k])
            own_modal = scenario.action_set[best]
    human.end_episode(task.id, success, last_intervention, own_modal, scenario)

    incorrect = count_incorrect_inputs(sess.rows, theta_true, scenario, convention, qtables)
    outcome = {
        "reached": None if reached_task is None else reached_task.id,
        "ticks": sess.t,
        "inputs": sum(1 for r in sess.rows if r.a_h != (0.0, 0.0)),
        "incorrect_inputs": incorrect,
    }
    return EpisodeLog(scenario_hash=scenario_hash(scenario), mode=mode, seed=seed,
                      theta_true=theta_true, rows=sess.rows, outcome=outcome)


def replay(log: EpisodeLog, scenario: Scenario, qtables: list[QTable] | None = None
           ) -> EpisodeLog:
    """Re-simulate a log's recorded input sequence; states and beliefs must match."""
    if qtables is None:
        qtables = tables_for(scenario)
    convention = build_convention(scenario.convention_spec)
    sess = TickSession(scenario, qtables, convention=convention, mode=log.mode)
    for r in log.rows:
        sess.tick(np.array(r.a_h))
    reached_task = sess.reached_task()
    outcome = dict(log.outcome)
    outcome["reached"] = None if reached_task is None else reached_task.id
    outcome["ticks"] = sess.t
    return EpisodeLog(scenario_hash=log.scenario_hash, mode=log.mode, seed=log.seed,
                      theta_true=log.theta_true, rows=sess.rows, outcome=outcome)


def success(log: EpisodeLog, input_budget: float) -> bool:
    """Reached the intended task using no more nonzero inputs than the budget."""
    return (log.outcome["reached"] == log.theta_true
            and log.outcome["inputs"] <= input_budget)


def belief_change(before: list[EpisodeLog], after: list[EpisodeLog]) -> float:
    """Mean confidence in the true task over the after-rows minus the before-rows."""
    if not before or not after:
        raise ValueError("belief_change needs nonempty before and after log sets")

    def mean_conf(logs: list[EpisodeLog]) -> float:
        vals = [r.belief[lg.theta_true] for lg in logs for r in lg.rows]
        return float(np.mean(vals))

    return mean_conf(after) - mean_conf(before)


def _window_belief_change(logs: list[EpisodeLog]) -> float:
    """First-quarter vs last-quarter confidence in the true task, over the
    chronologically concatenated rows of an episode sequence."""
    conf = [r.belief[lg.theta_true] for lg in logs for r in lg.rows]
    n = len(conf)
    if n < 4:
        return 0.0
    w = max(1, n // 4)
    return float(np.mean(conf[-w:]) - np.mean(conf[:w]))


def _episode_seed(master: int, loc: int, user: int, episode: int) -> int:
    """Documented splitter: seeds depend on (master, location, user, episode) only,
    so the same user sees the same stream in every mode (paired comparisons)."""
    ss = np.random.SeedSequence([master, loc, user, episode])
    return int(ss.generate_state(1)[0])


def run_cell(scenario: Scenario, mode: str, human_spec: dict, n_seeds: int,
             episodes_per_seed: int, master_seed: int, loc_i: int,
             qtables: list[QTable]) -> list[EpisodeLog]:
    """All episodes of one (location, mode) cell; one persistent operator per seed."""
    convention = build_convention(scenario.convention_spec)
    logs = []
    for user in range(n_seeds):
        human = build_human(human_spec)
        for ep in range(episodes_per_seed):
            theta_true = ep % len(scenario.tasks)
            seed = _episode_seed(master_seed, loc_i, user, ep)
            logs.append(run_episode(scenario, mode, human, theta_true, seed,
                                    qtables=qtables, convention=convention))
    return logs


def cell_metrics(logs: list[EpisodeLog], episodes_per_seed: int) -> Metrics:
    inputs = [lg.outcome["inputs"] for lg in logs]
    budget = float(np.mean(inputs))
    succ = float(np.mean([1.0 if success(lg, budget) else 0.0 for lg in logs]))
    changes = []
    for i in range(0, len(logs), episodes_per_seed):
        seq = logs[i:i + episodes_per_seed]
        changes.append(_window_belief_change(seq))
    return Metrics(success_rate=succ, belief_change=float(np.mean(changes)),
                   mean_inputs=budget)


def run_experiment(config: dict, out_dir) -> list[dict]:
    """Scenario sweep over locations x modes x seeds; writes CSV metrics and
    line-delimited episode logs; fully determined by the config."""
    base = config.get("base_scenario")
    if isinstance(base, str):
        from .world import load_scenario_file
        base_sc = load_scenario_file(base)
        base_dict = None
    else:
        base_dict = dict(base)
        base_sc = scenario_from_dict(base_dict)

    locations = config.get("locations") or [{"name": "default"}]
    modes = config.get("modes", ["ours", "no_assist"])
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r} in sweep config")
    n_seeds = int(config.get("seeds", 50))
    episodes_per_seed = int(config.get("episodes_per_seed", 3))
    human_spec = config.get("human_model", {"type": "adaptive_mimic"})
    master_seed = int(config.get("master_seed", base_sc.rng_seed))

    out_dir = Path(out_dir)
    (out_dir / "logs").mkdir(parents=True, exist_ok=True)

    rows = []
    for loc_i, loc in enumerate(locations):
        if "tasks" in loc or base_dict is not None:
            from .world import serialize_scenario
            d = base_dict if base_dict is not None else serialize_scenario(base_sc)
            d = dict(d)
            if "tasks" in loc:
                d["tasks"] = loc["tasks"]
            scenario = scenario_from_dict(d)
        else:
            scenario = base_sc
        qtables = tables_for(scenario)
        for mode in modes:
            logs = run_cell(scenario, mode, human_spec, n_seeds, episodes_per_seed,
                            master_seed, loc_i, qtables)
            metrics = cell_metrics(logs, episodes_per_seed)
            name = loc.get("name", f"loc{loc_i}")
            rows.append({"location": name, "mode": mode,
                         "success_rate": metrics.success_rate,
                         "belief_change": metrics.belief_change,
                         "mean_inputs": metrics.mean_inputs,
                         "n_episodes": len(logs)})
            with open(out_dir / "logs" / f"{name}_{mode}.jsonl", "w",
                      encoding="utf-8") as f:
                for lg in logs:
                    f.write(lg.to_json() + "\n")

    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["location", "mode", "metric", "value"])
        for r in rows:
            for metric in ("success_rate", "belief_change", "mean_inputs"):
                w.writerow([r["location"], r["mode"], metric, repr(r[metric])])
    return rows
