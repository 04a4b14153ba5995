"""Observation -> normalised per-slot feature vectors and the action mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..actions import N_ACTIONS, Action
from ..sim import Observation

N_FEATURES = 8


@dataclass(frozen=True)
class Scales:
    v_max: float = 30.0
    a_max: float = 5.0
    p_max: float = 100.0


def normalize(obs: Observation, scales: Scales = Scales()) -> np.ndarray:
    """(n_slots, 8) array ``[p_e, v_e, a_e, d_e, p_n, v_n, a_n, d_n]`` in [-1, 1].

    Empty slots carry -1 in the four vehicle components.
    """
    e = obs.ego
    ego = [e.p / scales.p_max, e.v / scales.v_max, e.a / scales.a_max, e.delta / scales.p_max]
    out = np.empty((len(obs.vehicles), N_FEATURES))
    for i, veh in enumerate(obs.vehicles):
        out[i, :4] = ego
        if veh.exists:
            out[i, 4:] = (veh.p / scales.p_max, veh.v / scales.v_max,
                          veh.a / scales.a_max, veh.delta / scales.p_max)
        else:
            out[i, 4:] = -1.0
    return np.clip(out, -1.0, 1.0)


def action_mask(obs: Observation) -> np.ndarray:
    """Valid actions: take-way and give-way always, follow(j) iff slot j exists."""
    mask = np.zeros(N_ACTIONS, dtype=bool)
    mask[Action.TAKE_WAY] = mask[Action.GIVE_WAY] = True
    for slot in obs.existing():
        mask[Action.follow(slot)] = True
    return mask
