"""Recurrent Q-network policy with action masking."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .features import Scales, action_mask, normalize
from .learning import Adam, Batch, Episode, ReplayBuffer, Sgd, select_action, td_loss, train_step
from .network import NetworkParams, Sizes, backward, forward, forward_sequence, zero_state

__all__ = [
    "Adam", "Batch", "CheckpointError", "Episode", "NetworkParams", "ReplayBuffer", "Scales", "Sgd",
    "Sizes", "action_mask", "backward", "forward", "forward_sequence", "load_checkpoint", "normalize",
    "save_checkpoint", "select_action", "td_loss", "train_step", "zero_state",
]
