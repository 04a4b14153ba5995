"""Terminal rewards and the feasibility/comfort shaping penalty."""
from __future__ import annotations

from dataclasses import dataclass

from .sim import EpisodeOutcome, OutcomeKind


@dataclass(frozen=True)
class RewardConfig:
    tau_m: float = 25.0
    alpha: float = 0.5
    success: float = 1.0
    failure: float = -1.0
    timeout: float = 0.5
    step_min: float = -2.0
    step_max: float = 0.0
    min_interval: float = 1.0 / 3.0  # floor for the time denominators (one decision period)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.min_interval > 0:
            raise ValueError("min_interval must be positive")
        if self.step_min > self.step_max:
            raise ValueError("empty step clamp interval")

    @property
    def beta(self) -> float:
        return 1.0 - self.alpha


@dataclass
class CrashClock:
    """Episode time of the first predicted crash (``None`` until one happens)."""

    t_pred: float | None = None

    def mark(self, tau: float):
        if self.t_pred is None:
            self.t_pred = tau


def shaping_penalty(p_crash: int, p_comf: float, clock: CrashClock, tau: float,
                    config: RewardConfig = RewardConfig()) -> float:
    """Unclamped penalty ``f``; marks the crash clock on the first crash prediction."""
    if p_crash not in (0, 1):
        raise ValueError("p_crash must be 0 or 1")
    if not 0.0 <= p_comf <= 1.0:
        raise ValueError("p_comf must lie in [0, 1]")
    if p_crash:
        clock.mark(tau)
    f = config.beta * p_comf * config.tau_m / max(tau, config.min_interval)
    if p_crash:
        f += config.alpha * config.tau_m / max(tau - clock.t_pred, config.min_interval)
    return f


def step_reward(p_crash: int, p_comf: float, clock: CrashClock, tau: float,
                config: RewardConfig = RewardConfig()) -> float:
    """Non-terminal reward ``-f`` clamped to ``[step_min, step_max]``."""
    f = shaping_penalty(p_crash, p_comf, clock, tau, config)
    return min(max(-f, config.step_min), config.step_max)


def terminal_reward(outcome: EpisodeOutcome | OutcomeKind, config: RewardConfig = RewardConfig()) -> float:
    kind = outcome.kind if isinstance(outcome, EpisodeOutcome) else outcome
    return {
        OutcomeKind.SUCCESS: config.success,
        OutcomeKind.FAILURE: config.failure,
        OutcomeKind.TIMEOUT: config.timeout,
    }[kind]
