"""Command line entry points: simulate, sweep, bandit, fit-regret, serve."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import gateway, runner, simhuman
from .simhuman import BanditInstance, RegretTrace, build_human, regret_fit, run_bandit
from .value import tables_for
from .world import ScenarioError, load_scenario_file

CONFIG_ERROR = 2


def _cmd_simulate(args) -> int:
    scenario = load_scenario_file(args.scenario)
    human = build_human({"type": args.human})
    qtables = tables_for(scenario)
    log = runner.run_episode(scenario, args.mode, human, args.task, args.seed,
                             qtables=qtables)
    text = log.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    o = log.outcome
    print(f"mode={args.mode} task={args.task} reached={o['reached']} "
          f"ticks={o['ticks']} inputs={o['inputs']} incorrect={o['incorrect_inputs']}",
          file=sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        config = yaml.safe_load(f)
    rows = runner.run_experiment(config, args.out)
    for r in rows:
        print(f"{r['location']:>12} {r['mode']:>10}  success={r['success_rate']:.3f} "
              f"belief_change={r['belief_change']:+.3f} mean_inputs={r['mean_inputs']:.1f}")
    return 0


def _cmd_bandit(args) -> int:
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    w = csv.writer(out)
    w.writerow(["seed", "k", "reg"])
    for seed in range(args.seeds):
        rng = np.random.default_rng(seed)
        correct = (args.correct_arm if args.correct_arm is not None
                   else int(rng.integers(args.n_arms)))
        inst = BanditInstance(n_arms=args.n_arms, correct_arm=correct,
                              horizon=args.horizon)
        human = build_human({"type": args.human})
        trace = run_bandit(inst, human, args.revealing, rng)
        for k, reg in enumerate(trace.reg):
            w.writerow([seed, k, int(reg)])
    if args.out:
        out.close()
    return 0


def _cmd_fit_regret(args) -> int:
    traces: list[RegretTrace] = []
    paths = sorted(Path(args.indir).glob("*.csv"))
    if not paths:
        print(f"no csv files in {args.indir}", file=sys.stderr)
        return CONFIG_ERROR
    for path in paths:
        per_seed: dict[int, list[tuple[int, int]]] = {}
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                per_seed.setdefault(int(row["seed"]), []).append(
                    (int(row["k"]), int(row["reg"])))
        for seed, pairs in sorted(per_seed.items()):
            pairs.sort()
            traces.append(RegretTrace(reg=np.array([r for _, r in pairs]), seed=seed))
    fit = regret_fit(traces)
    print(json.dumps(fit, indent=2, sort_keys=True))
    return 0


def _cmd_serve(args) -> int:
    scenario = load_scenario_file(args.scenario)
    print(f"serving {args.scenario} on {args.addr}", file=sys.stderr)
    gateway.serve(scenario, addr=args.addr, log_dir=args.log_dir)
    return 0


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convreveal")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one episode")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--mode", default="ours", choices=runner.MODES)
    sim.add_argument("--human", default="adaptive_mimic",
                     choices=["direct", "adaptive_mimic", "explorer"])
    sim.add_argument("--task", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default=None)
    sim.set_defaults(func=_cmd_simulate)

    sw = sub.add_parser("sweep", help="run a sweep config")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=_cmd_sweep)

    bd = sub.add_parser("bandit", help="bandit regret traces as CSV")
    bd.add_argument("--n-arms", type=int, default=8)
    bd.add_argument("--horizon", type=int, default=500)
    bd.add_argument("--human", default="adaptive_mimic",
                    choices=["direct", "adaptive_mimic", "explorer"])
    bd.add_argument("--revealing", type=_bool, required=True)
    bd.add_argument("--seeds", type=int, default=200)
    bd.add_argument("--correct-arm", type=int, default=None)
    bd.add_argument("--out", default=None)
    bd.set_defaults(func=_cmd_bandit)

    fr = sub.add_parser("fit-regret", help="fit constant vs logarithmic regret")
    fr.add_argument("--in", dest="indir", required=True)
    fr.set_defaults(func=_cmd_fit_regret)

    sv = sub.add_parser("serve", help="serve the interactive gateway")
    sv.add_argument("--addr", default="127.0.0.1:8765")
    sv.add_argument("--scenario", required=True)
    sv.add_argument("--log-dir", default="episode_logs")
    sv.set_defaults(func=_cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
