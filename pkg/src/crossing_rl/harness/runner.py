"""Episode loop, training and evaluation.

The policy decides every ``decision_every`` simulation steps; the
controller acts on every step.  One reward is emitted per decision
interval: the terminal reward if the episode ends inside the interval,
otherwise the clamped shaping penalty from the decision-step feedback.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from ..actions import Action
from ..dqn import (
    Adam,
    Episode,
    NetworkParams,
    ReplayBuffer,
    action_mask,
    forward,
    normalize,
    select_action,
    train_step,
    zero_state,
)
from ..reward import CrashClock, step_reward, terminal_reward
from ..sim import EpisodeOutcome, OutcomeKind, World, spawn_episode
from ..topology import PathTopology, build_topology
from .agents import MpcController, make_controller, realized_comfort
from .config import RunConfig
from .metrics import CurvePoint, Metrics

log = logging.getLogger(__name__)

# independent seed streams derived from the run seed
TRAIN_STREAM, EVAL_STREAM, EXPLORE_STREAM, INIT_STREAM, LAYOUT_STREAM = range(5)


def derive_seed(seed: int, stream: int, index: int = 0) -> int:
    return int(np.random.SeedSequence([seed, stream, index]).generate_state(1, np.uint64)[0])


@functools.lru_cache(maxsize=None)
def _topology(n_crossings: int, d_cross: float) -> PathTopology:
    return build_topology(n_crossings, d_cross)


def make_world(config: RunConfig, seed: int) -> World:
    """Scenario for an episode seed; double crossings draw d_cross from the configured list."""
    if config.scenario == "single":
        topo = _topology(1, 0.0)
    else:
        rng = np.random.default_rng(derive_seed(seed, LAYOUT_STREAM))
        topo = _topology(2, float(config.d_cross[int(rng.integers(len(config.d_cross)))]))
    return spawn_episode(topo, seed, config.sim)


# -- policies ------------------------------------------------------------------


class NetworkPolicy:
    def __init__(self, params: NetworkParams):
        self.params = params
        self.state = zero_state(params)

    def reset(self):
        self.state = zero_state(self.params)

    def decide(self, features, mask, epsilon, rng):
        q, self.state = forward(self.params, features, self.state)
        return select_action(q, mask, epsilon, rng), q


class FixedPolicy:
    """Scripted policy that always requests the same action."""

    def __init__(self, action: Action):
        self.action = Action(action)

    def reset(self):
        pass

    def decide(self, features, mask, epsilon, rng):
        if not mask[self.action]:
            raise ValueError(f"{self.action.name} is not available")
        return self.action, None


# -- episodes ------------------------------------------------------------------


@dataclass
class EpisodeResult:
    seed: int
    outcome: EpisodeOutcome
    rewards: list[float]
    actions: list[int]
    p_crash: list[int]
    episode: Episode
    rows: list[dict] = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


def run_episode(config: RunConfig, controller, policy, seed: int, epsilon: float = 0.0,
                rng: np.random.Generator | None = None, trace: bool = False) -> EpisodeResult:
    rng = rng if rng is not None else np.random.default_rng(derive_seed(seed, EXPLORE_STREAM))
    world = make_world(config, seed)
    controller.reset()
    policy.reset()
    every = config.training.decision_every
    j_max = config.sim.j_max
    clock = CrashClock()
    obs = world.observe()
    feats, masks, actions, rewards, crashes = [], [], [], [], []
    rows = []
    outcome = None
    action, q, feedback, tau = None, None, None, 0.0
    acc, jerks = [], []
    while outcome is None:
        decision = world.step_count % every == 0
        if decision:
            f, m = normalize(obs), action_mask(obs)
            action, q = policy.decide(f, m, epsilon, rng)
            feats.append(f)
            masks.append(m)
            actions.append(int(action))
            tau = world.elapsed
            acc, jerks = [], []
        jerk, fb = controller.act(world.ego, obs, action, decision)
        if decision:
            feedback = fb
            crashes.append(fb.p_crash)
        jerk = min(max(jerk, -j_max), j_max)
        obs, outcome = world.step(jerk)
        acc.append(world.ego.a)
        jerks.append(jerk)
        reward = None
        if outcome is not None:
            reward = terminal_reward(outcome, config.reward)
        elif world.step_count % every == 0:
            p_comf = feedback.p_comf
            if p_comf is None:
                p_comf = realized_comfort(acc, jerks, config.mpc)
            reward = step_reward(feedback.p_crash, p_comf, clock, tau, config.reward)
        if reward is not None:
            rewards.append(reward)
        if trace:
            rows.append(_trace_row(world, action, q, reward, feedback, jerk, controller))
    T = len(actions)
    dones = np.zeros(T, dtype=bool)
    dones[-1] = True
    episode = Episode(np.array(feats), np.array(masks), np.array(actions),
                      np.array(rewards), dones)
    return EpisodeResult(seed, outcome, rewards, actions, crashes, episode, rows)


def _trace_row(world: World, action, q, reward, feedback, jerk, controller) -> dict:
    row = world.snapshot()
    row["action"] = Action(action).name
    for i in range(6):
        row[f"q{i}"] = None if q is None else float(q[i])
    row["jerk"] = jerk
    row["reward"] = reward
    row["p_crash"] = feedback.p_crash
    plan = controller.last_plan if isinstance(controller, MpcController) else None
    row["mpc_feasible"] = None if plan is None else int(plan.feasible)
    row["plan_p_end"] = None if plan is None else float(plan.states[-1, 0])
    row["plan_v_end"] = None if plan is None else float(plan.states[-1, 1])
    return row


# -- evaluation and training -------------------------------------------------------


def eval_seeds(config: RunConfig) -> list[int]:
    return [derive_seed(config.seed, EVAL_STREAM, i) for i in range(config.training.eval_episodes)]


def controller_for(config: RunConfig):
    return make_controller(config.agent, config.mpc, config.ego_sm, config.sim.headway)


def evaluate(config: RunConfig, policy, seeds: list[int] | None = None) -> tuple[Metrics, list[EpisodeResult]]:
    """Greedy rollouts over the fixed evaluation seeds."""
    controller = controller_for(config)
    seeds = eval_seeds(config) if seeds is None else seeds
    results = [run_episode(config, controller, policy, s, 0.0) for s in seeds]
    return Metrics.from_results(results), results


@dataclass
class TrainResult:
    params: NetworkParams
    curve: list[CurvePoint]
    gradient_steps: int
    losses: list[float]
    final_results: list[EpisodeResult]   # per-episode results of the last evaluation


def train(config: RunConfig, progress=None) -> TrainResult:
    """Epsilon-greedy DQN training with periodic greedy evaluation.

    ``progress(episode, metrics, params)`` is called after each evaluation.
    """
    tc = config.training
    params = NetworkParams.init(np.random.default_rng(derive_seed(config.seed, INIT_STREAM)),
                                config.network)
    target = params.copy()
    opt = Adam(tc.lr)
    replay = ReplayBuffer(tc.replay_capacity)
    rng = np.random.default_rng(derive_seed(config.seed, EXPLORE_STREAM))
    controller = controller_for(config)
    policy = NetworkPolicy(params)
    curve, losses, steps = [], [], 0
    last: list[EpisodeResult] = []

    def checkpoint_eval(episode: int):
        metrics, results = evaluate(config, NetworkPolicy(params))
        last[:] = results
        curve.append(CurvePoint(episode, metrics))
        log.info("episode %d: success %.3f ctr %.3f", episode, metrics.success_rate, metrics.ctr)
        if progress is not None:
            progress(episode, metrics, params)

    checkpoint_eval(0)
    for ep in range(tc.episodes):
        res = run_episode(config, controller, policy, derive_seed(config.seed, TRAIN_STREAM, ep),
                          tc.epsilon(ep), rng)
        replay.add(res.episode)
        if len(replay) >= tc.batch_size:
            for _ in range(tc.updates_per_episode):
                _, loss = train_step(params, replay.sample(tc.batch_size, rng), target, tc.gamma, opt)
                losses.append(loss)
                steps += 1
                if steps % tc.target_sync == 0:
                    target = params.copy()
        if (ep + 1) % tc.eval_every == 0 or ep + 1 == tc.episodes:
            checkpoint_eval(ep + 1)
    return TrainResult(params, curve, steps, losses, last)


def is_timeout(result: EpisodeResult) -> bool:
    return result.outcome.kind is OutcomeKind.TIMEOUT
