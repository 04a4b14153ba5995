"""Low-level controllers that turn a high-level action into ego jerk.

Both controllers expose ``reset()`` and ``act(ego, obs, action, decision)``
returning ``(jerk, feedback)``; ``feedback`` is only produced on decision
steps and carries the crash flag and comfort value for the reward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import mpc
from ..actions import Action
from ..mpc import MpcConfig, PlanResult
from ..sim import Observation
from ..sliding_mode import SmParams, Target, sm_accel

_REACH_TOL = 1e-6


@dataclass
class Feedback:
    p_crash: int
    p_comf: float | None        # None: measured over the coming interval instead
    plan: PlanResult | None = None


def effective_action(action: Action, obs: Observation) -> Action:
    """Follow(j) for a slot that has emptied since the decision degrades to take-way."""
    slot = Action(action).follow_slot
    if slot is not None and not obs.vehicles[slot].exists:
        return Action.TAKE_WAY
    return Action(action)


class MpcController:
    """Replans every step under the latest action.

    An infeasible plan switches to the braking fallback, which is replayed
    open loop until the next decision step.
    """

    name = "mpc"

    def __init__(self, config: MpcConfig = MpcConfig()):
        self.config = config
        self._fallback: list[float] = []
        self.last_plan: PlanResult | None = None

    def reset(self):
        self._fallback = []
        self.last_plan = None

    def act(self, ego, obs: Observation, action: Action, decision: bool):
        if decision:
            self._fallback = []
        elif self._fallback:
            return self._fallback.pop(0), None
        res = mpc.plan(ego, obs, effective_action(action, obs), self.config)
        self.last_plan = res
        if not res.feasible:
            self._fallback = [float(u) for u in res.controls[1:]]
        fb = Feedback(res.p_crash, res.p_comf, res) if decision else None
        return res.first_jerk, fb


def reachable_interval(p: float, v: float, a_max: float, t: np.ndarray):
    """Position range reachable at times ``t`` with |a| <= a_max and no reversing."""
    stop_t = v / a_max
    low = np.where(t < stop_t, p + v * t - 0.5 * a_max * t**2, p + v * v / (2 * a_max))
    high = p + v * t + 0.5 * a_max * t**2
    return low, high


def reachability_crash(ego, obs: Observation, action: Action, config: MpcConfig) -> int:
    """1 if the action's position bounds leave the ego's reachable set at some step."""
    preds = mpc.predict_obstacles(obs, config)
    bounds = mpc.build_constraints(effective_action(action, obs), preds, config, ego_p=ego.p)
    t = np.arange(config.N + 1) * config.Ts
    low, high = reachable_interval(ego.p, ego.v, config.a_max, t)
    lo = np.maximum(low, bounds.lower)
    hi = np.minimum(high, bounds.upper)
    return int(np.any(lo > hi + _REACH_TOL))


class SmController:
    """Sliding-mode tracking of an action-specific target.

    Take-way cruises, give-way stops short of the nearest occupied crossing,
    follow(j) tracks a headway behind j's position mapped into the ego frame.
    """

    name = "sm"

    def __init__(self, params: SmParams = SmParams(), config: MpcConfig = MpcConfig(),
                 headway: float = 6.0):
        self.params = params
        self.config = config
        self.headway = headway

    def reset(self):
        pass

    def target(self, ego, obs: Observation, action: Action) -> Target | None:
        action = effective_action(action, obs)
        cfg = self.config
        if action is Action.TAKE_WAY:
            return None
        if action is Action.GIVE_WAY:
            preds = mpc.predict_obstacles(obs, cfg)
            busy = [pr.p_cross_ego for pr in preds
                    if pr.window is not None and ego.p < pr.p_cross_ego + cfg.delta]
            return Target(min(busy) - cfg.delta, 0.0) if busy else None
        veh = obs.vehicles[action.follow_slot]
        return Target(veh.p_cross_ego - veh.delta - self.headway, veh.v)

    def act(self, ego, obs: Observation, action: Action, decision: bool):
        cfg = self.config
        a_cmd = sm_accel(self.params, ego.p, ego.v, self.target(ego, obs, action))
        jerk = float(np.clip((a_cmd - ego.a) / cfg.Ts, -cfg.j_max, cfg.j_max))
        fb = Feedback(reachability_crash(ego, obs, action, cfg), None) if decision else None
        return jerk, fb


def realized_comfort(accels: list[float], jerks: list[float], config: MpcConfig) -> float:
    """Comfort of the executed motion with the planner's normaliser."""
    if not jerks:
        return 0.0
    a = np.asarray(accels)
    j = np.asarray(jerks)
    cost = config.q_a * float(a @ a) + config.r_j * float(j @ j)
    return min(max(cost / (config.comfort_norm * len(jerks)), 0.0), 1.0)


def make_controller(agent: str, mpc_config: MpcConfig, sm_params: SmParams, headway: float = 6.0):
    if agent == "mpc":
        return MpcController(mpc_config)
    if agent == "sm":
        return SmController(sm_params, mpc_config, headway)
    raise ValueError(f"unknown agent {agent!r}")
