"""Small feed-forward policy/value network with hand-rolled backprop.

Layout: shared encoder (two 64-unit layers) -> 64-unit core -> heads
for action kind, selected index, and target-location grid cell, plus a
scalar value head.  The index and location heads are conditioned on the
chosen kind through a learned kind embedding.  Everything is float64
numpy, which keeps finite-difference gradient checks meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEG_INF = -1e30


def init_params(
    rng: np.random.Generator,
    obs_dim: int,
    n_kinds: int,
    n_index: int,
    n_loc: int,
    hidden: int = 64,
    embed: int = 16,
) -> dict[str, np.ndarray]:
    def dense(n_in, n_out):
        scale = np.sqrt(2.0 / n_in)
        return rng.normal(0.0, scale, size=(n_in, n_out))

    return {
        "enc1_W": dense(obs_dim, hidden),
        "enc1_b": np.zeros(hidden),
        "enc2_W": dense(hidden, hidden),
        "enc2_b": np.zeros(hidden),
        "core_W": dense(hidden, hidden),
        "core_b": np.zeros(hidden),
        "kind_W": dense(hidden, n_kinds) * 0.01,
        "kind_b": np.zeros(n_kinds),
        "emb": rng.normal(0.0, 0.1, size=(n_kinds, embed)),
        "idx_W": dense(hidden + embed, n_index) * 0.01,
        "idx_b": np.zeros(n_index),
        "loc_W": dense(hidden + embed, n_loc) * 0.01,
        "loc_b": np.zeros(n_loc),
        "val_W": dense(hidden, 1) * 0.1,
        "val_b": np.zeros(1),
    }


def forward_trunk(params, X: np.ndarray) -> dict[str, np.ndarray]:
    h1 = np.maximum(X @ params["enc1_W"] + params["enc1_b"], 0.0)
    h2 = np.maximum(h1 @ params["enc2_W"] + params["enc2_b"], 0.0)
    core = np.maximum(h2 @ params["core_W"] + params["core_b"], 0.0)
    return {"X": X, "h1": h1, "h2": h2, "core": core}


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, NEG_INF)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(probs: np.ndarray) -> np.ndarray:
    logp = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    return -(probs * logp).sum(axis=-1)


def cond_input(params, core: np.ndarray, kinds: np.ndarray) -> np.ndarray:
    return np.concatenate([core, params["emb"][kinds]], axis=-1)


def head_logits(params, name: str, x: np.ndarray) -> np.ndarray:
    return x @ params[f"{name}_W"] + params[f"{name}_b"]


def value(params, core: np.ndarray) -> np.ndarray:
    return (core @ params["val_W"] + params["val_b"])[..., 0]


def policy_forward(
    params,
    obs: np.ndarray,
    kind_mask: np.ndarray,
    index_mask: np.ndarray | None = None,
    kind: int | None = None,
):
    """Distributions for a single observation.

    Returns (dists, value) where dists maps head name to a probability
    vector.  Index and location heads are conditioned on ``kind`` (the
    most probable kind when not given).
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if obs.shape[1] != params["enc1_W"].shape[0]:
        raise ValueError(
            f"observation dim {obs.shape[1]} != expected {params['enc1_W'].shape[0]}"
        )
    cache = forward_trunk(params, obs)
    kp = masked_softmax(head_logits(params, "kind", cache["core"]), kind_mask)
    if kind is None:
        kind = int(np.argmax(kp[0]))
    cond = cond_input(params, cache["core"], np.asarray([kind]))
    if index_mask is None:
        index_mask = np.ones(params["idx_b"].shape[0], dtype=bool)
    ip = masked_softmax(head_logits(params, "idx", cond), index_mask)
    lp = masked_softmax(
        head_logits(params, "loc", cond), np.ones(params["loc_b"].shape[0], bool)
    )
    dists = {"kind": kp[0], "index": ip[0], "location": lp[0]}
    return dists, float(value(params, cache["core"])[0])


def zeros_like_params(params) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.0
    beta2: float = 0.99
    epsilon: float = 1e-5
    weight_decay: float = 1e-5


class Adam:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, cfg: AdamConfig):
        self.cfg = cfg
        self.t = 0
        self.m: dict[str, np.ndarray] | None = None
        self.v: dict[str, np.ndarray] | None = None

    def step(self, params, grads):
        if self.m is None:
            self.m = zeros_like_params(params)
            self.v = zeros_like_params(params)
        self.t += 1
        c = self.cfg
        for key, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {key!r}")
            self.m[key] = c.beta1 * self.m[key] + (1 - c.beta1) * g
            self.v[key] = c.beta2 * self.v[key] + (1 - c.beta2) * g * g
            m_hat = self.m[key] / (1 - c.beta1**self.t)
            v_hat = self.v[key] / (1 - c.beta2**self.t)
            params[key] = params[key] - c.learning_rate * (
                m_hat / (np.sqrt(v_hat) + c.epsilon)
                + c.weight_decay * params[key]
            )
        return params


def adam_step(params, grads, cfg: AdamConfig, step_count: int, m=None, v=None):
    """Single functional Adam update; returns (params', m', v')."""
    m = m if m is not None else zeros_like_params(params)
    v = v if v is not None else zeros_like_params(params)
    out = {}
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {key!r}")
        m[key] = cfg.beta1 * m[key] + (1 - cfg.beta1) * g
        v[key] = cfg.beta2 * v[key] + (1 - cfg.beta2) * g * g
        m_hat = m[key] / (1 - cfg.beta1**step_count)
        v_hat = v[key] / (1 - cfg.beta2**step_count)
        out[key] = params[key] - cfg.learning_rate * (
            m_hat / (np.sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * params[key]
        )
    return out, m, v
