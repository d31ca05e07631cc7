"""V-trace targets, UPGO returns, and the combined actor-critic loss
with analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import net


def vtrace(
    behavior_logp: np.ndarray,
    target_logp: np.ndarray,
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap_value: float,
    gamma: float,
    rho_bar: float = 1.0,
    c_bar: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Off-policy corrected value targets and policy-gradient advantages.

    Returns (vs, pg_advantages), both shape (T,).  With behavior equal
    to target and unit clips the targets reduce to discounted n-step
    returns.
    """
    T = len(rewards)
    ratios = np.exp(target_logp - behavior_logp)
    rhos = np.minimum(rho_bar, ratios)
    cs = np.minimum(c_bar, ratios)
    values_next = np.append(values[1:], bootstrap_value)
    deltas = rhos * (rewards + gamma * values_next - values)
    vs = np.zeros(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        acc = deltas[t] + gamma * cs[t] * acc
        vs[t] = values[t] + acc
    vs_next = np.append(vs[1:], bootstrap_value)
    pg_adv = rhos * (rewards + gamma * vs_next - values)
    return vs, pg_adv


def upgo_returns(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap_value: float,
    gamma: float,
) -> np.ndarray:
    """Upgoing returns: bootstrap through the future return only while
    the one-step action value beats the state value, else cut to the
    value estimate."""
    T = len(rewards)
    values_next = np.append(values[1:], bootstrap_value)
    g = np.zeros(T)
    g[T - 1] = rewards[T - 1] + gamma * bootstrap_value
    for t in range(T - 2, -1, -1):
        q_next = rewards[t + 1] + gamma * values_next[t + 1]
        if q_next >= values[t + 1]:
            g[t] = rewards[t] + gamma * g[t + 1]
        else:
            g[t] = rewards[t] + gamma * values[t + 1]
    return g


@dataclass
class LossConfig:
    gamma: float = 0.99
    rho_bar: float = 1.0
    c_bar: float = 1.0
    upgo_weight: float = 1.0
    value_weight: float = 1.0
    entropy_weight: float = 1.0
    # Normalization of the per-head entropy term.  The returns of the
    # prototype are two orders of magnitude smaller than the head
    # entropies, so the term is rescaled to keep weight 1 meaningful.
    entropy_scale: float = 0.002


@dataclass
class Trajectory:
    """One episode of decisions under a recorded behavior policy."""

    obs: np.ndarray  # (T, D)
    kind_mask: np.ndarray  # (T, K) bool
    index_mask: np.ndarray  # (T, E) bool
    kinds: np.ndarray  # (T,) int
    indices: np.ndarray  # (T,) int, -1 when the index head is unused
    locs: np.ndarray  # (T,) int, -1 when the location head is unused
    behavior_logp: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    bootstrap_value: float = 0.0


@dataclass
class FrozenTargets:
    vs: np.ndarray
    pg_adv: np.ndarray
    upgo_adv: np.ndarray


@dataclass
class LossOutput:
    total: float
    policy_loss: float
    upgo_loss: float
    value_loss: float
    entropy_loss: float
    diagnostics: dict = field(default_factory=dict)


def _forward_traj(params, traj: Trajectory):
    T = len(traj.rewards)
    cache = net.forward_trunk(params, traj.obs)
    core = cache["core"]
    kind_probs = net.masked_softmax(
        net.head_logits(params, "kind", core), traj.kind_mask
    )
    cond = net.cond_input(params, core, traj.kinds)
    idx_probs = net.masked_softmax(
        net.head_logits(params, "idx", cond), traj.index_mask
    )
    n_loc = params["loc_b"].shape[0]
    loc_probs = net.masked_softmax(
        net.head_logits(params, "loc", cond), np.ones((T, n_loc), bool)
    )
    values = net.value(params, core)

    ar = np.arange(T)
    idx_used = traj.indices >= 0
    loc_used = traj.locs >= 0
    logp = np.log(kind_probs[ar, traj.kinds])
    logp = logp + np.where(
        idx_used, np.log(idx_probs[ar, np.maximum(traj.indices, 0)]), 0.0
    )
    logp = logp + np.where(
        loc_used, np.log(loc_probs[ar, np.maximum(traj.locs, 0)]), 0.0
    )
    return cache, cond, kind_probs, idx_probs, loc_probs, values, logp


def compute_targets(
    params, traj: Trajectory, cfg: LossConfig
) -> FrozenTargets:
    """Targets and advantages at the current parameters; callers treat
    these as constants (stop-gradient)."""
    *_, values, logp = _forward_traj(params, traj)
    vs, pg_adv = vtrace(
        traj.behavior_logp,
        logp,
        traj.rewards,
        values,
        traj.bootstrap_value,
        cfg.gamma,
        cfg.rho_bar,
        cfg.c_bar,
    )
    g_up = upgo_returns(traj.rewards, values, traj.bootstrap_value, cfg.gamma)
    rho_clip1 = np.minimum(1.0, np.exp(logp - traj.behavior_logp))
    return FrozenTargets(vs=vs, pg_adv=pg_adv, upgo_adv=rho_clip1 * (g_up - values))


def loss_and_grads(
    params: dict[str, np.ndarray],
    trajs: list[Trajectory],
    cfg: LossConfig,
    frozen: list[FrozenTargets] | None = None,
):
    """Total loss over trajectories and its gradient.

    When ``frozen`` is given those targets are used verbatim, which
    makes the loss an exact differentiable function of the parameters
    (used by the finite-difference gradient check); otherwise targets
    are recomputed at the current parameters.
    """
    if not trajs:
        raise ValueError("empty trajectory set")
    grads = net.zeros_like_params(params)
    n_steps = sum(len(t.rewards) for t in trajs)
    totals = dict(policy=0.0, upgo=0.0, value=0.0, entropy=0.0)
    hidden = params["core_b"].shape[0]

    for i, traj in enumerate(trajs):
        T = len(traj.rewards)
        ar = np.arange(T)
        cache, cond, kind_probs, idx_probs, loc_probs, values, logp = _forward_traj(
            params, traj
        )
        tgt = frozen[i] if frozen is not None else compute_targets(params, traj, cfg)

        totals["policy"] += -(tgt.pg_adv * logp).sum() / n_steps
        totals["upgo"] += -(tgt.upgo_adv * logp).sum() / n_steps
        totals["value"] += 0.5 * ((values - tgt.vs) ** 2).sum() / n_steps

        coef = (tgt.pg_adv + cfg.upgo_weight * tgt.upgo_adv) / n_steps
        ent_w = cfg.entropy_weight * cfg.entropy_scale / n_steps
        idx_used = traj.indices >= 0
        loc_used = traj.locs >= 0

        def head_dz(probs, used, taken, n_head):
            onehot = np.zeros_like(probs)
            onehot[ar[used], taken[used]] = 1.0
            dz_pg = np.where(used[:, None], -coef[:, None] * (onehot - probs), 0.0)
            logp_all = np.where(
                probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0
            )
            h = net.entropy(probs)
            # loss term -w*H/log(n); dH/dz_j = -p_j*(log p_j + H)
            dz_ent = np.where(
                used[:, None],
                ent_w * probs * (logp_all + h[:, None]) / np.log(n_head),
                0.0,
            )
            return dz_pg + dz_ent, h[used].sum() / np.log(n_head)

        dz_kind, ent_kind = head_dz(
            kind_probs, np.ones(T, bool), traj.kinds, kind_probs.shape[1]
        )
        dz_idx, ent_idx = head_dz(
            idx_probs, idx_used, traj.indices, idx_probs.shape[1]
        )
        dz_loc, ent_loc = head_dz(
            loc_probs, loc_used, traj.locs, loc_probs.shape[1]
        )
        totals["entropy"] += (
            -cfg.entropy_scale * (ent_kind + ent_idx + ent_loc) / n_steps
        )

        dvalue = cfg.value_weight * (values - tgt.vs) / n_steps

        grads["kind_W"] += cache["core"].T @ dz_kind
        grads["kind_b"] += dz_kind.sum(0)
        dcond = dz_idx @ params["idx_W"].T + dz_loc @ params["loc_W"].T
        grads["idx_W"] += cond.T @ dz_idx
        grads["idx_b"] += dz_idx.sum(0)
        grads["loc_W"] += cond.T @ dz_loc
        grads["loc_b"] += dz_loc.sum(0)
        np.add.at(grads["emb"], traj.kinds, dcond[:, hidden:])
        grads["val_W"] += cache["core"].T @ dvalue[:, None]
        grads["val_b"] += np.array([dvalue.sum()])

        dcore = (
            dz_kind @ params["kind_W"].T
            + dcond[:, :hidden]
            + dvalue[:, None] @ params["val_W"].T
        )
        dcore = dcore * (cache["core"] > 0)
        grads["core_W"] += cache["h2"].T @ dcore
        grads["core_b"] += dcore.sum(0)
        dh2 = (dcore @ params["core_W"].T) * (cache["h2"] > 0)
        grads["enc2_W"] += cache["h1"].T @ dh2
        grads["enc2_b"] += dh2.sum(0)
        dh1 = (dh2 @ params["enc2_W"].T) * (cache["h1"] > 0)
        grads["enc1_W"] += cache["X"].T @ dh1
        grads["enc1_b"] += dh1.sum(0)

    total = (
        totals["policy"]
        + cfg.upgo_weight * totals["upgo"]
        + cfg.value_weight * totals["value"]
        + cfg.entropy_weight * totals["entropy"]
    )
    out = LossOutput(
        total=total,
        policy_loss=totals["policy"],
        upgo_loss=totals["upgo"],
        value_loss=cfg.value_weight * totals["value"],
        entropy_loss=totals["entropy"],
    )
    return out, grads


def compute_losses(
    trajectories: list[Trajectory], params, cfg: LossConfig
) -> LossOutput:
    if not trajectories:
        raise ValueError("empty trajectory set")
    out, _ = loss_and_grads(params, trajectories, cfg)
    return out
