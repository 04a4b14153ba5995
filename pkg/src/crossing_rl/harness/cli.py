"""Command line entry point: ``crossing-rl {train,evaluate,rollout,experiments}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from ..actions import Action
from ..dqn import CheckpointError, load_checkpoint, save_checkpoint
from . import plots
from .config import ConfigError, RunConfig, load_config, save_config
from .metrics import write_curve, write_metrics, write_rows
from .runner import FixedPolicy, NetworkPolicy, controller_for, evaluate, run_episode, train

log = logging.getLogger("crossing_rl")

POLICIES = {"network": None, "take-way": Action.TAKE_WAY, "give-way": Action.GIVE_WAY}


class UsageError(Exception):
    pass


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "agent", None):
        changes["agent"] = args.agent
    if getattr(args, "scenario", None):
        changes["scenario"] = args.scenario
    episodes = getattr(args, "episodes", None)
    if episodes is not None:
        field = "episodes" if args.command == "train" else "eval_episodes"
        changes["training"] = dataclasses.replace(cfg.training, **{field: episodes})
    return cfg.replace(**changes) if changes else cfg


def _load_params(path, cfg: RunConfig):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint {path}: {exc}") from exc
    return load_checkpoint(data, expect=cfg.network)


def _policy(args, cfg: RunConfig):
    action = POLICIES[args.policy]
    if action is not None:
        return FixedPolicy(action)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required for the network policy")
    return NetworkPolicy(_load_params(args.checkpoint, cfg))


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _prepare_out(args.out)
    ckpt_path = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.bin"
    save_config(cfg, out / "config.ini")
    (out / "checkpoints").mkdir(exist_ok=True)

    def progress(episode, metrics, params):
        (out / "checkpoints" / f"episode_{episode:06d}.bin").write_bytes(save_checkpoint(params))
        print(f"episode {episode}: success {metrics.success_rate:.3f} "
              f"collisions {metrics.collisions} timeouts {metrics.timeouts}", flush=True)

    result = train(cfg, progress)
    ckpt_path.write_bytes(save_checkpoint(result.params))
    write_curve(out / "curve.csv", result.curve)
    write_metrics(out / "metrics.csv", result.curve[-1].metrics,
                  {"agent": cfg.agent, "scenario": cfg.scenario, "seed": cfg.seed,
                   "training_episodes": cfg.training.episodes})
    plots.plot_curve(out / "curve.png", result.curve, f"{cfg.agent} agent, {cfg.scenario} crossing")
    print(f"wrote {ckpt_path} and {out / 'curve.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _prepare_out(args.out)
    metrics, results = evaluate(cfg, _policy(args, cfg))
    write_metrics(out / "metrics.csv", metrics,
                  {"agent": cfg.agent, "scenario": cfg.scenario, "seed": cfg.seed, "policy": args.policy})
    write_rows(out / "episodes.csv", [
        {"index": i, "seed": r.seed, "outcome": r.outcome.kind.value, "steps": r.outcome.step_count,
         "decisions": len(r.actions), "reward": r.total_reward, "crash_predictions": sum(r.p_crash)}
        for i, r in enumerate(results)])
    plots.plot_metrics(out / "metrics.png", metrics)
    n_traces = len(results) if args.traces < 0 else min(args.traces, len(results))
    if n_traces:
        traces = out / "traces"
        traces.mkdir(exist_ok=True)
        controller = controller_for(cfg)
        policy = _policy(args, cfg)
        for r in results[:n_traces]:
            res = run_episode(cfg, controller, policy, r.seed, trace=True)
            write_rows(traces / f"trace_{r.seed}.csv", res.rows)
    print(f"success {metrics.success_rate:.3f} collisions {metrics.collisions} "
          f"timeouts {metrics.timeouts} ctr {metrics.ctr:.3f} mean reward {metrics.mean_reward:.3f}")
    return 0


def cmd_rollout(args) -> int:
    cfg = _config(args)
    out = _prepare_out(args.out)
    res = run_episode(cfg, controller_for(cfg), _policy(args, cfg), args.seed or 0, trace=True)
    path = out / f"trace_{args.seed or 0}.csv"
    write_rows(path, res.rows)
    plots.plot_trace(out / f"trace_{args.seed or 0}.png", res.rows,
                     f"seed {args.seed or 0}: {res.outcome.kind.value}")
    print(f"{res.outcome.kind.value} after {res.outcome.step_count} steps, reward {res.total_reward:.3f}; "
          f"wrote {path}")
    return 0


def cmd_experiments(args) -> int:
    from .experiments import run_experiments
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    summary = run_experiments(_prepare_out(args.out), cfg, episodes=args.episodes,
                              eval_episodes=args.eval_episodes)
    for key, row in summary["runs"].items():
        print(f"{key}: success {row['success_rate']:.3f} ctr {row['ctr']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossing-rl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint_help):
        p.add_argument("--config", help="INI run configuration (defaults when omitted)")
        p.add_argument("--seed", type=int, help="run seed (episode seed for rollout)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--checkpoint", help=checkpoint_help)
        p.add_argument("--agent", choices=("mpc", "sm"))
        p.add_argument("--scenario", choices=("single", "double"))

    p = sub.add_parser("train", help="train a policy")
    common(p, "where to write the final checkpoint (default OUT/checkpoint.bin)")
    p.add_argument("--episodes", type=int, help="training episodes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="greedy evaluation over the fixed seed set")
    common(p, "checkpoint to evaluate")
    p.add_argument("--policy", choices=tuple(POLICIES), default="network")
    p.add_argument("--episodes", type=int, help="evaluation episodes")
    p.add_argument("--traces", type=int, default=-1, help="trace files to write (-1: all)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rollout", help="one episode with a full step trace")
    common(p, "checkpoint to run")
    p.add_argument("--policy", choices=tuple(POLICIES), default="network")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("experiments", help="train and evaluate both agents on both scenarios")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--eval-episodes", type=int, default=300)
    p.set_defaults(func=cmd_experiments)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
