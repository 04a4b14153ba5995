"""Training, evaluation and comparison runs with CSV and PNG outputs."""
from .agents import Feedback, MpcController, SmController, reachability_crash
from .config import CONFIG_VERSION, ConfigError, RunConfig, TrainingConfig, load_config, save_config
from .metrics import CurvePoint, Metrics
from .runner import (
    EpisodeResult,
    FixedPolicy,
    NetworkPolicy,
    evaluate,
    make_world,
    run_episode,
    train,
)

__all__ = [
    "CONFIG_VERSION", "ConfigError", "CurvePoint", "EpisodeResult", "Feedback", "FixedPolicy",
    "Metrics", "MpcController", "NetworkPolicy", "RunConfig", "SmController", "TrainingConfig",
    "evaluate", "load_config", "make_world", "reachability_crash", "run_episode", "save_config", "train",
]
