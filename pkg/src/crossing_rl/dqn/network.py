"""Q-network: shared per-slot encoder, fusion layer, LSTM and a linear Q head.

Forward and backward passes are written out by hand over padded batches of
episode sequences shaped ``(T, B, n_slots, n_features)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..actions import N_ACTIONS
from .features import N_FEATURES

N_SLOTS = 4
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "Wx", "Wh", "bl", "WQ", "b4")


@dataclass(frozen=True)
class Sizes:
    h1: int = 64
    h2: int = 64
    h3: int = 64
    lstm: int = 64
    n_slots: int = N_SLOTS
    n_features: int = N_FEATURES
    n_actions: int = N_ACTIONS

    def shapes(self) -> dict[str, tuple[int, ...]]:
        H = self.lstm
        return {
            "W1": (self.h1, self.n_features), "b1": (self.h1,),
            "W2": (self.h2, self.h1), "b2": (self.h2,),
            "W3": (self.n_slots, self.h3, self.h2), "b3": (self.h3,),
            "Wx": (4 * H, self.h3), "Wh": (4 * H, H), "bl": (4 * H,),
            "WQ": (self.n_actions, H), "b4": (self.n_actions,),
        }


class NetworkParams:
    """Named weight arrays.  The encoder weights W1/W2 are stored once for all slots."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        missing = set(PARAM_NAMES) - set(arrays)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        self.arrays = {k: np.asarray(arrays[k], dtype=np.float64) for k in PARAM_NAMES}
        s = self.arrays
        H = s["Wh"].shape[1]
        self.sizes = Sizes(s["W1"].shape[0], s["W2"].shape[0], s["W3"].shape[1], H,
                           s["W3"].shape[0], s["W1"].shape[1], s["WQ"].shape[0])
        for name, shape in self.sizes.shapes().items():
            if s[name].shape != shape:
                raise ValueError(f"layer {name}: shape {s[name].shape}, expected {shape}")

    def __getitem__(self, name):
        return self.arrays[name]

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.arrays.items()})

    @classmethod
    def zeros(cls, sizes: Sizes = Sizes()) -> "NetworkParams":
        return cls({k: np.zeros(s) for k, s in sizes.shapes().items()})

    @classmethod
    def init(cls, rng: np.random.Generator, sizes: Sizes = Sizes()) -> "NetworkParams":
        """Uniform in +-1/sqrt(fan_in); forget-gate bias 1."""
        fan_in = {"W1": sizes.n_features, "b1": sizes.n_features, "W2": sizes.h1, "b2": sizes.h1,
                  "W3": sizes.n_slots * sizes.h2, "b3": sizes.n_slots * sizes.h2,
                  "Wx": sizes.h3 + sizes.lstm, "Wh": sizes.h3 + sizes.lstm, "bl": sizes.h3 + sizes.lstm,
                  "WQ": sizes.lstm, "b4": sizes.lstm}
        arrays = {}
        for name, shape in sizes.shapes().items():
            lim = 1.0 / np.sqrt(fan_in[name])
            arrays[name] = rng.uniform(-lim, lim, size=shape)
        H = sizes.lstm
        arrays["bl"][H:2 * H] = 1.0
        return cls(arrays)


def _flat(a):
    return a.reshape(-1, a.shape[-1])


def _fused_w3(W3):
    """(n_slots, G, H) -> (G, n_slots * H) so the fusion layer is one matmul."""
    S, G, H = W3.shape
    return W3.transpose(1, 0, 2).reshape(G, S * H)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def zero_state(params: NetworkParams, batch: int | None = None):
    H = params.sizes.lstm
    shape = (H,) if batch is None else (batch, H)
    return np.zeros(shape), np.zeros(shape)


def _check_input(params: NetworkParams, X: np.ndarray):
    sz = params.sizes
    if X.shape[-2:] != (sz.n_slots, sz.n_features):
        raise ValueError(f"features have shape {X.shape}, expected (..., {sz.n_slots}, {sz.n_features})")


def forward(params: NetworkParams, features: np.ndarray, state=None):
    """One decision step: ``features`` is (n_slots, n_features).  Returns (q, state')."""
    features = np.asarray(features, dtype=np.float64)
    _check_input(params, features)
    if features.ndim != 2:
        raise ValueError("forward takes a single (n_slots, n_features) observation")
    h, c = state if state is not None else zero_state(params)
    Q, cache = forward_sequence(params, features[None, None], (h[None], c[None]))
    return Q[0, 0], (cache["h"][-1][0], cache["c"][-1][0])


def forward_sequence(params: NetworkParams, X: np.ndarray, state=None):
    """Q values for a padded batch ``X`` of shape (T, B, n_slots, n_features)."""
    X = np.asarray(X, dtype=np.float64)
    _check_input(params, X)
    p = params.arrays
    T, B = X.shape[:2]
    H = params.sizes.lstm
    A1 = np.tanh(X @ p["W1"].T + p["b1"])
    A2 = np.tanh(A1 @ p["W2"].T + p["b2"])
    A3 = np.tanh(A2.reshape(T, B, -1) @ _fused_w3(p["W3"]).T + p["b3"])
    Xg = A3 @ p["Wx"].T + p["bl"]
    h, c = state if state is not None else zero_state(params, B)
    hs, cs, gates = [h], [c], []
    for t in range(T):
        z = Xg[t] + h @ p["Wh"].T
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        hs.append(h)
        cs.append(c)
        gates.append((i, f, g, o))
    H4 = np.stack(hs[1:])
    Q = H4 @ p["WQ"].T + p["b4"]
    cache = {"X": X, "A1": A1, "A2": A2, "A3": A3, "h": hs, "c": cs, "gates": gates, "H4": H4}
    return Q, cache


def backward(params: NetworkParams, cache, dQ: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given ``dQ = dLoss/dQ`` of shape (T, B, n_actions)."""
    p = params.arrays
    H = params.sizes.lstm
    X, A1, A2, A3, H4 = cache["X"], cache["A1"], cache["A2"], cache["A3"], cache["H4"]
    hs, cs, gates = cache["h"], cache["c"], cache["gates"]
    T = dQ.shape[0]
    g = {}
    g["WQ"] = _flat(dQ).T @ _flat(H4)
    g["b4"] = dQ.sum(axis=(0, 1))
    dH4 = dQ @ p["WQ"]
    dXg = np.empty((T,) + (dQ.shape[1], 4 * H))
    dWh = np.zeros_like(p["Wh"])
    dh_next = np.zeros_like(hs[0])
    dc_next = np.zeros_like(cs[0])
    for t in reversed(range(T)):
        i, f, gg, o = gates[t]
        c, c_prev, h_prev = cs[t + 1], cs[t], hs[t]
        dh = dH4[t] + dh_next
        tc = np.tanh(c)
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = np.concatenate([
            dc * gg * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - gg * gg),
            do * o * (1.0 - o),
        ], axis=1)
        dWh += dz.T @ h_prev
        dXg[t] = dz
        dh_next = dz @ p["Wh"]
        dc_next = dc * f
    g["Wh"] = dWh
    g["Wx"] = _flat(dXg).T @ _flat(A3)
    g["bl"] = dXg.sum(axis=(0, 1))
    dZ3 = (dXg @ p["Wx"]) * (1.0 - A3 * A3)
    g["b3"] = dZ3.sum(axis=(0, 1))
    S, G, H2 = p["W3"].shape
    A2f = A2.reshape(-1, S * H2)
    g["W3"] = (_flat(dZ3).T @ A2f).reshape(G, S, H2).transpose(1, 0, 2)
    dZ2 = (dZ3 @ _fused_w3(p["W3"])).reshape(A2.shape) * (1.0 - A2 * A2)
    g["W2"] = _flat(dZ2).T @ _flat(A1)
    g["b2"] = dZ2.sum(axis=(0, 1, 2))
    dZ1 = (dZ2 @ p["W2"]) * (1.0 - A1 * A1)
    g["W1"] = _flat(dZ1).T @ _flat(X)
    g["b1"] = dZ1.sum(axis=(0, 1, 2))
    return g
