"""Run configuration: one INI file holds every module's settings.

Schema (``version = 1``)::

    [run]       version, scenario (single | double), d_cross (comma list),
                agent (mpc | sm), seed
    [training]  TrainingConfig fields
    [network]   h1, h2, h3, lstm
    [mpc]       MpcConfig fields (tuples as comma lists, ``none`` for unset)
    [sim]       SimConfig scalar and range fields
    [traffic]   SmParams of the traffic vehicles
    [behaviour] IntentionParams of the traffic vehicles
    [ego_sm]    SmParams of the SM agent's ego controller
    [reward]    RewardConfig fields

Missing keys keep their defaults; unknown keys are rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..dqn import Sizes
from ..mpc import MpcConfig
from ..reward import RewardConfig
from ..sim import SimConfig
from ..sliding_mode import IntentionParams, SmParams
from ..topology import D_CROSS_VALUES

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 10_000
    eval_episodes: int = 300
    eval_every: int = 1000          # training episodes between evaluations
    gamma: float = 0.95
    batch_size: int = 16            # episode sequences per gradient step
    replay_capacity: int = 2000     # episodes
    target_sync: int = 1000         # gradient steps
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5       # share of training used to anneal epsilon
    lr: float = 1e-3
    updates_per_episode: int = 4    # gradient steps per training episode
    decision_every: int = 10        # simulation steps per policy decision

    def __post_init__(self):
        if self.episodes < 0 or self.eval_episodes < 1 or self.eval_every < 1:
            raise ConfigError("episode counts must be non-negative and eval sizes positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.decision_every < 1 or self.batch_size < 1 or self.target_sync < 1:
            raise ConfigError("decision_every, batch_size and target_sync must be positive")

    def epsilon(self, episode: int) -> float:
        span = self.eps_fraction * self.episodes
        if span <= 0:
            return self.eps_end
        frac = min(episode / span, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "single"
    d_cross: tuple[float, ...] = D_CROSS_VALUES
    agent: str = "mpc"
    seed: int = 0
    training: TrainingConfig = field(default_factory=TrainingConfig)
    network: Sizes = field(default_factory=Sizes)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    ego_sm: SmParams = field(default_factory=SmParams)
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.scenario not in ("single", "double"):
            raise ConfigError(f"scenario must be single or double, got {self.scenario!r}")
        if self.agent not in ("mpc", "sm"):
            raise ConfigError(f"agent must be mpc or sm, got {self.agent!r}")
        if not self.d_cross:
            raise ConfigError("d_cross needs at least one value")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if abs(self.mpc.Ts - self.sim.dt) > 1e-12:
            raise ConfigError("mpc Ts must equal the simulation step")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


# -- serialisation -----------------------------------------------------------

_NETWORK_KEYS = ("h1", "h2", "h3", "lstm")
_SIM_SKIP = ("sm", "behaviour")


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return {"true": True, "false": False}[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, str):
            return raw
        # tuple or optional tuple/float
        if raw.lower() == "none":
            return None
        if isinstance(default, tuple) and default and all(isinstance(x, str) for x in default):
            return tuple(x.strip() for x in raw.split(","))
        if isinstance(default, tuple) and default and all(type(x) is int for x in default):
            return tuple(int(x) for x in raw.split(","))
        if isinstance(default, tuple) or "," in raw:
            return tuple(float(x) for x in raw.split(","))
        return float(raw)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case sensitive (K is a gain, k is not)
    return cp


def _section(obj, skip=(), only=None) -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(obj):
        if f.name in skip or (only is not None and f.name not in only):
            continue
        out[f.name] = _fmt(getattr(obj, f.name))
    return out


def _apply(obj, items: dict[str, str], name: str, skip=(), only=None):
    allowed = {f.name for f in dataclasses.fields(obj)
               if f.name not in skip and (only is None or f.name in only)}
    changes = {}
    for key, raw in items.items():
        if key not in allowed:
            raise ConfigError(f"unknown key [{name}] {key}")
        changes[key] = _parse(raw, getattr(obj, key), f"[{name}] {key}")
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def to_ini(config: RunConfig) -> str:
    cp = _parser()
    cp["run"] = {"version": str(CONFIG_VERSION), "scenario": config.scenario,
                 "d_cross": _fmt(config.d_cross), "agent": config.agent, "seed": str(config.seed)}
    cp["training"] = _section(config.training)
    cp["network"] = _section(config.network, only=_NETWORK_KEYS)
    cp["mpc"] = _section(config.mpc)
    cp["sim"] = _section(config.sim, skip=_SIM_SKIP)
    cp["traffic"] = _section(config.sim.sm)
    cp["behaviour"] = _section(config.sim.behaviour)
    cp["ego_sm"] = _section(config.ego_sm)
    cp["reward"] = _section(config.reward)
    lines = []
    for name in cp.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in cp[name].items())
        lines.append("")
    return "\n".join(lines)


def from_ini(text: str) -> RunConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    known = {"run", "training", "network", "mpc", "sim", "traffic", "behaviour", "ego_sm", "reward"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    version = run.pop("version", None)
    if version is None:
        raise ConfigError("[run] version is required")
    if version.strip() != str(CONFIG_VERSION):
        raise ConfigError(f"unsupported config version {version} (expected {CONFIG_VERSION})")
    sec = lambda name: dict(cp[name]) if cp.has_section(name) else {}  # noqa: E731
    base = RunConfig()
    sim = _apply(base.sim, sec("sim"), "sim", skip=_SIM_SKIP)
    sim = dataclasses.replace(sim, sm=_apply(sim.sm, sec("traffic"), "traffic"),
                              behaviour=_apply(sim.behaviour, sec("behaviour"), "behaviour"))
    top = {}
    for key, raw in run.items():
        if key not in ("scenario", "d_cross", "agent", "seed"):
            raise ConfigError(f"unknown key [run] {key}")
        top[key] = _parse(raw, getattr(base, key), f"[run] {key}")
    try:
        return RunConfig(
            training=_apply(base.training, sec("training"), "training"),
            network=_apply(base.network, sec("network"), "network", only=_NETWORK_KEYS),
            mpc=_apply(base.mpc, sec("mpc"), "mpc"),
            sim=sim,
            ego_sm=_apply(base.ego_sm, sec("ego_sm"), "ego_sm"),
            reward=_apply(base.reward, sec("reward"), "reward"),
            **top,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_ini(text)


def save_config(config: RunConfig, path):
    Path(path).write_text(to_ini(config))
