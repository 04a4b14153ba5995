"""Comparison runs: both agents on both scenarios with shared seeds and budgets.

Each run trains from the same run seed, evaluates the final policy on the
same evaluation seeds and stores its artifacts in ``<out>/<agent>_<scenario>``.
``summary.json`` collects the numbers; a finished run whose configuration
matches is reused instead of retrained.
"""
from __future__ import annotations

import dataclasses
import json
import math
import time
from pathlib import Path

from ..dqn import save_checkpoint
from . import plots
from .config import RunConfig, from_ini, save_config, to_ini
from .metrics import write_curve, write_metrics, write_rows
from .runner import is_timeout, train

RUNS = (("mpc", "single"), ("sm", "single"), ("mpc", "double"), ("sm", "double"))


def _clean(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def run_one(out: Path, config: RunConfig, log=print) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    done = out / "result.json"
    if done.exists() and (out / "config.ini").exists():
        if from_ini((out / "config.ini").read_text()) == config:
            return json.loads(done.read_text())
    save_config(config, out / "config.ini")
    t0 = time.time()
    result = train(config, lambda ep, m, _p: log(
        f"[{config.agent}/{config.scenario}] episode {ep}: success {m.success_rate:.3f}"))
    t_train = time.time() - t0
    (out / "checkpoint.bin").write_bytes(save_checkpoint(result.params))
    write_curve(out / "curve.csv", result.curve)
    plots.plot_curve(out / "curve.png", result.curve, f"{config.agent} agent, {config.scenario} crossing")

    # the last curve point evaluates the finished policy
    metrics, results = result.curve[-1].metrics, result.final_results
    write_metrics(out / "metrics.csv", metrics, {"agent": config.agent, "scenario": config.scenario})
    write_rows(out / "episodes.csv", [
        {"seed": r.seed, "outcome": r.outcome.kind.value, "reward": r.total_reward,
         "decisions": len(r.actions)} for r in results])
    plots.plot_metrics(out / "metrics.png", metrics)
    row = {
        "agent": config.agent, "scenario": config.scenario,
        "training_episodes": config.training.episodes, "eval_episodes": metrics.episodes,
        "success_rate": metrics.success_rate, "ctr": _clean(metrics.ctr),
        "collisions": metrics.collisions, "timeouts": metrics.timeouts,
        "mean_reward": metrics.mean_reward,
        "timeout_rewards": [r.total_reward for r in results if is_timeout(r)],
        "curve": [[p.episode, p.metrics.success_rate] for p in result.curve],
        "train_seconds": t_train, "gradient_steps": result.gradient_steps,
    }
    done.write_text(json.dumps(row, indent=1))
    return row


def experiment_config(base: RunConfig, agent: str, scenario: str, episodes: int,
                      eval_episodes: int) -> RunConfig:
    training = dataclasses.replace(base.training, episodes=episodes, eval_episodes=eval_episodes,
                                   eval_every=max(1, min(base.training.eval_every, episodes or 1)))
    return base.replace(agent=agent, scenario=scenario, training=training)


def run_experiments(out, base: RunConfig = RunConfig(), episodes: int = 10_000,
                    eval_episodes: int = 300, runs=RUNS, log=print) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"episodes": episodes, "eval_episodes": eval_episodes, "base_config": to_ini(base),
               "runs": {}}
    for agent, scenario in runs:
        cfg = experiment_config(base, agent, scenario, episodes, eval_episodes)
        summary["runs"][f"{agent}_{scenario}"] = run_one(out / f"{agent}_{scenario}", cfg, log)
        (out / "summary.json").write_text(json.dumps(summary, indent=1))
    return summary
