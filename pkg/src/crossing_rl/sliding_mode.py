"""Sliding-mode longitudinal control and the traffic intention behaviours."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple


class Intention(enum.Enum):
    TAKE_WAY = "take_way"
    GIVE_WAY = "give_way"
    CAUTIOUS = "cautious"


class Target(NamedTuple):
    p: float
    v: float


@dataclass(frozen=True)
class SmParams:
    """Gains of the sliding-mode law.

    ``c1``/``c2`` shape the sliding surface ``c1*gap_err + c2*speed_err``,
    ``mu`` is the switching gain and ``K`` the cruise proportional gain.
    """

    c1: float = 1.0
    c2: float = 2.0
    mu: float = 10.0
    K: float = 0.5
    v_max: float = 15.0
    a_max: float = 5.0

    def __post_init__(self):
        for name in ("c1", "c2", "mu", "K", "a_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class IntentionParams:
    stop_offset: float = 6.0       # give-way stop point before the crossing
    commit_offset: float = 4.0     # give-way vehicles stay this far short of the crossing
    cautious_zone: float = 25.0    # approach length with reduced speed
    cautious_ratio: float = 0.4
    zone_exit: float = 4.0         # reduced speed is held until this far past the crossing


def _sign(x: float) -> float:
    return float(x > 0) - float(x < 0)


def _clamp(a: float, a_max: float) -> float:
    return max(-a_max, min(a_max, a))


def sm_accel(params: SmParams, p: float, v: float, target: Target | None = None) -> float:
    """Acceleration command for a vehicle at (p, v).

    With a target the reaching law drives ``sigma = c1*x1 + c2*x2`` (gap and
    speed error) to zero; the result is capped by the cruise law
    ``K*(v_max - v)`` and clamped to +-a_max.
    """
    a_p = params.K * (params.v_max - v)
    if target is None:
        return _clamp(a_p, params.a_max)
    x1 = target.p - p
    x2 = target.v - v
    sigma = params.c1 * x1 + params.c2 * x2
    a_sm = (params.c1 * x2 + params.mu * _sign(sigma)) / params.c2
    return _clamp(min(a_sm, a_p), params.a_max)


def can_stop(p, v, p_cross_own, a_max, behaviour: IntentionParams = IntentionParams()) -> bool:
    """Whether full braking still ends before the crossing area."""
    return v * v / (2.0 * a_max) <= p_cross_own - behaviour.commit_offset - p


def intention_accel(
    kind: Intention,
    params: SmParams,
    p: float,
    v: float,
    p_cross_own: float,
    crossing_clear: bool,
    behaviour: IntentionParams = IntentionParams(),
    dt: float = 1.0 / 30.0,
) -> float:
    """Acceleration of a traffic vehicle with the given intention.

    ``params.v_max`` is the vehicle's own reference speed; ``dt`` is the
    control period, used by the give-way braking guard.
    """
    if kind is Intention.TAKE_WAY:
        return sm_accel(params, p, v)
    if kind is Intention.GIVE_WAY:
        if crossing_clear or not can_stop(p, v, p_cross_own, params.a_max, behaviour):
            return sm_accel(params, p, v)
        a = sm_accel(params, p, v, Target(p_cross_own - behaviour.stop_offset, 0.0))
        if not can_stop(p + v * dt, v, p_cross_own, params.a_max, behaviour):
            # braking later than this step could no longer stop in time
            a = -params.a_max
        return a
    # cautious: slow down near the crossing, never to a stop
    dist = p_cross_own - p
    if -behaviour.zone_exit <= dist <= behaviour.cautious_zone:
        v_slow = behaviour.cautious_ratio * params.v_max
        slow = SmParams(params.c1, params.c2, params.mu, params.K, v_slow, params.a_max)
        a = sm_accel(slow, p, v)
        if dist > 0 and v > v_slow:
            # constant deceleration that reaches v_slow at the crossing
            a = min(a, (v_slow * v_slow - v * v) / (2.0 * max(dist, 1.0)))
        return _clamp(a, params.a_max)
    return sm_accel(params, p, v)
