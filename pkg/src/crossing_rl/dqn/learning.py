"""Action selection, episode replay and the recurrent TD update."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..actions import Action
from .network import NetworkParams, backward, forward_sequence

_NEG = -1e300  # stands in for -inf on masked actions


def select_action(q: np.ndarray, mask: np.ndarray, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy choice restricted to the valid actions."""
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise ValueError("no valid action")
    if epsilon > 0 and rng.random() < epsilon:
        return Action(int(valid[rng.integers(valid.size)]))
    return Action(int(valid[np.argmax(np.asarray(q)[valid])]))


def masked_max(q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, q, _NEG).max(axis=-1)


@dataclass
class Episode:
    features: np.ndarray   # (T, n_slots, n_features)
    masks: np.ndarray      # (T, n_actions) bool
    actions: np.ndarray    # (T,) int
    rewards: np.ndarray    # (T,)
    dones: np.ndarray      # (T,) bool, true on the last transition of a terminated episode

    def __len__(self):
        return len(self.actions)


@dataclass
class Batch:
    X: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    valid: np.ndarray      # (T, B) padding mask

    @classmethod
    def from_episodes(cls, episodes: list[Episode]) -> "Batch":
        B = len(episodes)
        T = max(len(e) for e in episodes)
        f_shape = episodes[0].features.shape[1:]
        n_act = episodes[0].masks.shape[1]
        X = np.zeros((T, B) + f_shape)
        masks = np.ones((T, B, n_act), dtype=bool)
        actions = np.zeros((T, B), dtype=int)
        rewards = np.zeros((T, B))
        dones = np.ones((T, B), dtype=bool)
        valid = np.zeros((T, B), dtype=bool)
        for b, e in enumerate(episodes):
            n = len(e)
            X[:n, b] = e.features
            masks[:n, b] = e.masks
            actions[:n, b] = e.actions
            rewards[:n, b] = e.rewards
            dones[:n, b] = e.dones
            valid[:n, b] = True
        return cls(X, masks, actions, rewards, dones, valid)


class ReplayBuffer:
    """Whole-episode storage; sampling returns full sequences."""

    def __init__(self, capacity: int = 2000):
        self.episodes: deque[Episode] = deque(maxlen=capacity)

    def __len__(self):
        return len(self.episodes)

    def add(self, episode: Episode):
        if len(episode):
            self.episodes.append(episode)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Episode]:
        idx = rng.integers(len(self.episodes), size=min(batch_size, len(self.episodes)))
        return [self.episodes[i] for i in idx]


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: NetworkParams, grads: dict[str, np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params.arrays[name] -= self.lr * corr * m / (np.sqrt(v) + self.eps)


class Sgd:
    def __init__(self, lr: float = 1e-2):
        self.lr = lr

    def step(self, params: NetworkParams, grads: dict[str, np.ndarray]):
        for name, g in grads.items():
            params.arrays[name] -= self.lr * g


def td_targets(target_q: np.ndarray, batch: Batch, gamma: float) -> np.ndarray:
    """r_t + gamma * max over valid next actions (no bootstrap at terminals)."""
    nxt = np.zeros_like(batch.rewards)
    nxt[:-1] = masked_max(target_q[1:], batch.masks[1:])
    return batch.rewards + gamma * np.where(batch.dones, 0.0, nxt)


def td_loss(params: NetworkParams, batch: Batch, target_params: NetworkParams, gamma: float,
            clip: float = 1.0):
    """Huber-style TD loss and its gradients."""
    Q, cache = forward_sequence(params, batch.X)
    Qt, _ = forward_sequence(target_params, batch.X)
    y = td_targets(Qt, batch, gamma)
    q_sa = np.take_along_axis(Q, batch.actions[..., None], axis=-1)[..., 0]
    delta = np.where(batch.valid, q_sa - y, 0.0)
    n = max(int(batch.valid.sum()), 1)
    a = np.abs(delta)
    loss = float(np.sum(np.where(a <= clip, 0.5 * delta**2, clip * (a - 0.5 * clip))) / n)
    dQ = np.zeros_like(Q)
    np.put_along_axis(dQ, batch.actions[..., None], (np.clip(delta, -clip, clip) / n)[..., None], axis=-1)
    return loss, backward(params, cache, dQ)


def train_step(params: NetworkParams, episodes: list[Episode], target_params: NetworkParams,
               gamma: float, optimizer) -> tuple[NetworkParams, float]:
    """One gradient step on a batch of episode sequences (in place)."""
    if not episodes:
        return params, 0.0
    loss, grads = td_loss(params, Batch.from_episodes(episodes), target_params, gamma)
    optimizer.step(params, grads)
    return params, loss
