"""Longitudinal MPC: jerk-controlled triple integrator with action-dependent crossing bounds.

The problem is condensed onto the N jerk inputs; the Hessian depends only
on the configuration, so its factorisation is computed once and cached.
"""
from __future__ import annotations

import csv
import functools
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import qp
from .actions import Action
from .sim import Observation

log = logging.getLogger(__name__)

_WINDOW_TOL = 1e-9


@dataclass(frozen=True)
class MpcConfig:
    Ts: float = 1.0 / 30.0
    N: int = 100
    q_diag: tuple[float, float, float] = (0.0, 1.0, 1.0)
    r: float = 1.0
    p_diag: tuple[float, float, float] | None = None  # terminal weight, defaults to q_diag
    delta: float = 4.0          # crossing padding
    occupancy: float = 4.0      # half-width of the intersecting area
    v_ref: float = 15.0
    a_ref: float = 0.0
    j_ref: float = 0.0
    a_max: float = 5.0
    j_max: float = 10.0
    q_a: float = 1.0
    r_j: float = 1.0
    sigma_norm: float | None = None  # defaults to the per-step worst case
    giveway_hold: bool = False  # keep give-way bounds from window start to the horizon end

    def __post_init__(self):
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        weights = list(self.q_diag) + list(self.p_diag or ()) + [self.r, self.q_a, self.r_j]
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        if not (self.a_max > 0 and self.j_max > 0):
            raise ValueError("a_max and j_max must be positive")

    @property
    def terminal(self) -> tuple[float, float, float]:
        return self.p_diag if self.p_diag is not None else self.q_diag

    @property
    def comfort_norm(self) -> float:
        if self.sigma_norm is not None:
            return self.sigma_norm
        return self.a_max**2 * self.q_a + self.j_max**2 * self.r_j


def discretize(Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold model of p''' = j."""
    if not Ts > 0:
        raise ValueError("Ts must be positive")
    A = np.array([[1.0, Ts, Ts * Ts / 2], [0.0, 1.0, Ts], [0.0, 0.0, 1.0]])
    B = np.array([Ts**3 / 6, Ts * Ts / 2, Ts])
    return A, B


# ----------------------------------------------------------------------------
# obstacles and bounds


@dataclass(frozen=True)
class ObstaclePrediction:
    slot: int
    p: np.ndarray                   # predicted positions, k = 0..N
    window: tuple[int, int] | None  # first and last occupied step (inclusive)
    p_cross_ego: float
    p_cross_own: float
    clear_step: int                 # first k beyond the intersecting area, N + 1 if none

    def occupies(self, k: int) -> bool:
        return self.window is not None and self.window[0] <= k <= self.window[1]


def predict_obstacles(obs: Observation, config: MpcConfig) -> list[ObstaclePrediction]:
    """Constant-velocity predictions for every observed vehicle."""
    k = np.arange(config.N + 1)
    out = []
    for slot, veh in enumerate(obs.vehicles):
        if not veh.exists:
            continue
        pco = veh.p_cross_own
        p = veh.p + veh.v * k * config.Ts
        inside = np.flatnonzero(np.abs(p - pco) <= config.occupancy + _WINDOW_TOL)
        window = (int(inside[0]), int(inside[-1])) if inside.size else None
        beyond = np.flatnonzero(p > pco + config.occupancy + _WINDOW_TOL)
        clear = int(beyond[0]) if beyond.size else config.N + 1
        out.append(ObstaclePrediction(slot, p, window, veh.p_cross_ego, pco, clear))
    return out


@dataclass
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def free(cls, N: int) -> "Bounds":
        return cls(np.full(N + 1, -np.inf), np.full(N + 1, np.inf))

    def tighten_lower(self, k, value):
        self.lower[k] = np.maximum(self.lower[k], value)

    def tighten_upper(self, k, value):
        self.upper[k] = np.minimum(self.upper[k], value)


def _occupied_steps(pred: ObstaclePrediction, N: int, hold: bool = False) -> range:
    if pred.window is None:
        return range(0)
    stop = N if hold else pred.window[1]
    return range(pred.window[0], stop + 1)


def build_constraints(
    action: Action,
    predictions: list[ObstaclePrediction],
    config: MpcConfig,
    ego_p: float | None = None,
) -> Bounds:
    """Per-step bounds on the ego position implied by ``action``.

    Vehicles whose crossing the ego has already passed (``ego_p`` beyond
    ``p_cross_ego + delta``) impose nothing.  Contradictory bounds are
    returned as they are; they surface as QP infeasibility.
    """
    action = Action(action)
    N, d = config.N, config.delta
    bounds = Bounds.free(N)
    slot = action.follow_slot
    target = None
    if slot is not None:
        target = next((pr for pr in predictions if pr.slot == slot), None)
        if target is None:
            raise ValueError(f"{action.name} refers to an empty observation slot")
    active = [pr for pr in predictions if ego_p is None or ego_p < pr.p_cross_ego + d]

    if action is Action.TAKE_WAY:
        for pr in active:
            for k in _occupied_steps(pr, N):
                bounds.tighten_lower(k, pr.p_cross_ego + d)
    elif action is Action.GIVE_WAY:
        for pr in active:
            for k in _occupied_steps(pr, N, config.giveway_hold):
                bounds.tighten_upper(k, pr.p_cross_ego - d)
    elif target in active:
        # stay behind j's crossing until j clears it, with padding while j is on it
        bounds.tighten_upper(slice(0, min(target.clear_step, N + 1)), target.p_cross_ego)
        for k in _occupied_steps(target, N):
            bounds.tighten_upper(k, target.p_cross_ego - d)
    if slot is not None:
        for pr in active:
            if pr is target:
                continue
            if pr.p_cross_ego < target.p_cross_ego:
                ahead = True
            elif pr.p_cross_ego > target.p_cross_ego:
                ahead = False
            else:
                # same crossing: pass i only if it arrives after j
                ahead = abs(pr.p_cross_own - pr.p[0]) > abs(target.p_cross_own - target.p[0])
            for k in _occupied_steps(pr, N):
                if ahead:
                    bounds.tighten_lower(k, pr.p_cross_ego + d)
                else:
                    bounds.tighten_upper(k, pr.p_cross_ego - d)
    return bounds


# ----------------------------------------------------------------------------
# condensed problem


@dataclass(frozen=True)
class _Condensed:
    Phi: np.ndarray     # (N+1, 3, 3) state transition powers
    Gam: np.ndarray     # (N+1, 3, N) input-to-state maps
    H: np.ndarray
    QG: np.ndarray      # blockdiag(Q..Q, P) @ Gamma, flattened
    q_flat: np.ndarray
    factor: qp.HessianFactor
    box_rows: np.ndarray  # v_k >= 0 and |a_k| <= a_max, k = 1..N


@functools.lru_cache(maxsize=8)
def _condense(config: MpcConfig) -> _Condensed:
    N = config.N
    A, B = discretize(config.Ts)
    Phi = np.empty((N + 1, 3, 3))
    Gam = np.zeros((N + 1, 3, N))
    Phi[0] = np.eye(3)
    for k in range(1, N + 1):
        Phi[k] = A @ Phi[k - 1]
        Gam[k] = A @ Gam[k - 1]
        Gam[k][:, k - 1] = B
    q = np.tile(np.asarray(config.q_diag, float), N + 1)
    q[-3:] = config.terminal
    G = Gam.reshape(3 * (N + 1), N)
    QG = q[:, None] * G
    H = 2.0 * (G.T @ QG + config.r * np.eye(N))
    H = 0.5 * (H + H.T)
    factor = qp.HessianFactor(H)
    box_rows = np.vstack([Gam[1:, 1, :], Gam[1:, 2, :]])
    return _Condensed(Phi, Gam, H, QG, q, factor, box_rows)


# ----------------------------------------------------------------------------
# planning


@dataclass
class PlanResult:
    states: np.ndarray        # (N+1, 3): p, v, a
    controls: np.ndarray      # (N,)
    feasible: bool
    p_comf: float
    first_jerk: float
    bounds: Bounds
    status: qp.Status | None = None
    iterations: int = 0

    @property
    def p_crash(self) -> int:
        return 0 if self.feasible else 1


def comfort(states: np.ndarray, controls: np.ndarray, config: MpcConfig) -> float:
    """Normalised acceleration/jerk cost of a trajectory, in [0, 1]."""
    N = controls.size
    a = states[:, 2]
    cost = config.q_a * float(a @ a) + config.r_j * float(controls @ controls)
    return min(max(cost / (config.comfort_norm * N), 0.0), 1.0)


def rollout(x0, controls, config: MpcConfig) -> np.ndarray:
    A, B = discretize(config.Ts)
    xs = np.empty((controls.size + 1, 3))
    xs[0] = x0
    for k, u in enumerate(controls):
        xs[k + 1] = A @ xs[k] + B * u
    return xs


def braking_profile(x0, config: MpcConfig) -> tuple[np.ndarray, np.ndarray]:
    """Jerk-limited ramp to full braking; the fallback when no plan exists."""
    A, B = discretize(config.Ts)
    xs = np.empty((config.N + 1, 3))
    us = np.empty(config.N)
    xs[0] = x0
    for k in range(config.N):
        a = xs[k, 2]
        u = max(-config.j_max, min(config.j_max, (-config.a_max - a) / config.Ts))
        us[k] = u
        xs[k + 1] = A @ xs[k] + B * u
        if xs[k + 1, 1] < 0.0:
            # the vehicle has come to rest and stays there
            xs[k + 1:] = (xs[k + 1, 0], 0.0, 0.0)
            us[k + 1:] = 0.0
            break
    return xs, us


def plan(ego, obs: Observation, action: Action, config: MpcConfig = MpcConfig(),
         warm_start: np.ndarray | None = None, settings: qp.QpSettings | None = None) -> PlanResult:
    """Solve the tracking MPC for ``action``.

    ``ego`` is any object with ``p``, ``v``, ``a``.  ``warm_start`` is a jerk
    sequence guess (for example the previous plan shifted by one step).
    """
    N = config.N
    cond = _condense(config)
    x0 = np.array([ego.p, ego.v, ego.a], dtype=float)
    preds = predict_obstacles(obs, config)
    bounds = build_constraints(action, preds, config, ego_p=ego.p)

    free = cond.Phi @ x0                     # (N+1, 3) zero-input response
    ref = np.tile([0.0, config.v_ref, config.a_ref], N + 1)
    g = 2.0 * cond.QG.T @ (free.reshape(-1) - ref) - 2.0 * config.r * config.j_ref * np.ones(N)

    rows = [cond.box_rows]
    cl = [-free[1:, 1], -config.a_max - free[1:, 2]]
    cu = [np.full(N, np.inf), config.a_max - free[1:, 2]]
    pk = np.flatnonzero(np.isfinite(bounds.lower) | np.isfinite(bounds.upper))
    if pk.size:
        rows.append(cond.Gam[pk, 0, :])
        cl.append(bounds.lower[pk] - free[pk, 0])
        cu.append(bounds.upper[pk] - free[pk, 0])
    problem = qp.QpProblem(
        cond.H, g,
        lb=np.full(N, -config.j_max), ub=np.full(N, config.j_max),
        C=np.vstack(rows), cl=np.concatenate(cl), cu=np.concatenate(cu),
    )
    sol = qp.solve(problem, warm_start=warm_start, settings=settings, factor=cond.factor)
    if sol.status is qp.Status.OPTIMAL:
        u = np.clip(sol.x, -config.j_max, config.j_max)
        states = free + np.einsum("kin,n->ki", cond.Gam, u)
        return PlanResult(states, u, True, comfort(states, u, config), float(u[0]), bounds,
                          sol.status, sol.iterations)
    if sol.status is qp.Status.MAX_ITERATIONS:
        log.warning("MPC solve hit the iteration cap (%d); treated as infeasible", sol.iterations)
    states, u = braking_profile(x0, config)
    return PlanResult(states, u, False, comfort(states, u, config), float(u[0]), bounds,
                      sol.status, sol.iterations)


def shift_warm_start(controls: np.ndarray) -> np.ndarray:
    """Previous jerk plan advanced by one step (last input repeated)."""
    return np.concatenate([controls[1:], controls[-1:]])


def write_plan_csv(path, result: PlanResult, config: MpcConfig = MpcConfig()):
    """Dump a plan as (k, p, v, a, j, lower, upper) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "p", "v", "a", "j", "lower", "upper"])
        for k in range(config.N + 1):
            j = result.controls[k] if k < config.N else math.nan
            p, v, a = result.states[k]
            w.writerow([k] + [repr(float(x)) for x in
                              (p, v, a, j, result.bounds.lower[k], result.bounds.upper[k])])
