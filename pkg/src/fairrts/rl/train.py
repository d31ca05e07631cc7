"""Actor-critic training on the economy prototype, for both action
interfaces, plus a masked random policy used as a baseline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..actions import (
    BUILD_PYLON,
    COLLECT_MINERAL,
    HUMAN_KINDS,
    MINIMAP_H,
    MINIMAP_W,
    MOVE_CAMERA,
    PRODUCE_PROBE,
    RAW_KINDS,
    SCREEN_H,
    SCREEN_W,
    SELECT_POINT,
    SELECT_RECT,
    HumanAction,
    RawAction,
    unit_type_action_mask,
)
from ..episode import EpisodeRunner
from ..fairness import ProblemSpec
from ..sim import PROBE, SimConfig, _placement_valid, entity_view
from . import losses, net
from .obs import encode_observation, obs_dim

# Kinds whose argument comes from the location head.
LOCATED_HUMAN_KINDS = (BUILD_PYLON, SELECT_POINT, SELECT_RECT, MOVE_CAMERA)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.0
    beta2: float = 0.99
    epsilon: float = 1e-5
    weight_decay: float = 1e-5
    entropy_weight: float = 1.0
    entropy_scale: float = 0.002
    gamma: float = 0.99
    rho_bar: float = 1.0
    c_bar: float = 1.0
    upgo_weight: float = 1.0
    value_weight: float = 1.0
    step_mul: int = 8
    hidden: int = 64
    embed: int = 16
    loc_grid_w: int = 8
    loc_grid_h: int = 8
    # The human interface aims at screen cells at 4 px granularity, so
    # its argument space stays close to real pointing on a screen.
    human_loc_grid_w: int = 64
    human_loc_grid_h: int = 40
    updates_per_episode: int = 6
    seed: int = 1

    def grid_dims(self, interface: str) -> tuple[int, int]:
        if interface == "human":
            return self.human_loc_grid_w, self.human_loc_grid_h
        return self.loc_grid_w, self.loc_grid_h

    def loss_config(self) -> losses.LossConfig:
        return losses.LossConfig(
            gamma=self.gamma,
            rho_bar=self.rho_bar,
            c_bar=self.c_bar,
            upgo_weight=self.upgo_weight,
            value_weight=self.value_weight,
            entropy_weight=self.entropy_weight,
            entropy_scale=self.entropy_scale,
        )

    def adam_config(self) -> net.AdamConfig:
        return net.AdamConfig(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            weight_decay=self.weight_decay,
        )


@dataclass
class EpisodeStat:
    episode: int
    ret: float
    total_loss: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy_loss: float = 0.0


@dataclass
class LearningCurve:
    interface: str
    spec: str
    seed: int
    episodes: list[EpisodeStat] = field(default_factory=list)

    def returns(self) -> list[float]:
        return [e.ret for e in self.episodes]


def interface_kinds(interface: str) -> tuple[str, ...]:
    return RAW_KINDS if interface == "raw" else HUMAN_KINDS


def build_params(
    interface: str, sim_cfg: SimConfig, cfg: TrainConfig, rng: np.random.Generator
):
    gw, gh = cfg.grid_dims(interface)
    return net.init_params(
        rng,
        obs_dim(interface, sim_cfg.max_entities),
        len(interface_kinds(interface)),
        sim_cfg.max_entities,
        gw * gh,
        hidden=cfg.hidden,
        embed=cfg.embed,
    )


def _loc_cell_center(
    cell: int, grid: tuple[int, int], w: float, h: float
) -> tuple[float, float]:
    gw, gh = grid
    gx = cell % gw
    gy = cell // gw
    return ((gx + 0.5) * w / gw, (gy + 0.5) * h / gh)


def _kind_masks(state, interface: str, cfg: TrainConfig):
    """Kind availability plus per-kind index masks from the unit-type
    action mask."""
    kinds = interface_kinds(interface)
    verb_masks = unit_type_action_mask(state)
    e = state.cfg.max_entities
    index_masks = {}
    for kind in RAW_KINDS:
        m = np.zeros(e, dtype=bool)
        for i, verbs in enumerate(verb_masks):
            m[i] = kind in verbs
        index_masks[kind] = m
    if interface == "raw":
        kind_mask = np.array([index_masks[k].any() for k in kinds])
    else:
        kind_mask = np.ones(len(kinds), dtype=bool)
    return kind_mask, index_masks


def _action_from_heads(
    interface: str,
    state,
    kind_i: int,
    idx: int,
    loc: int,
    cfg: TrainConfig,
):
    kinds = interface_kinds(interface)
    kind = kinds[kind_i]
    sim_cfg = state.cfg
    grid = cfg.grid_dims(interface)
    if interface == "raw":
        target = None
        if kind == BUILD_PYLON:
            target = _loc_cell_center(loc, grid, sim_cfg.map_w, sim_cfg.map_h)
        return RawAction(kind, idx, target)
    if kind in (PRODUCE_PROBE, COLLECT_MINERAL):
        return HumanAction(kind)
    if kind == MOVE_CAMERA:
        return HumanAction(
            kind, minimap_point=_loc_cell_center(loc, grid, MINIMAP_W, MINIMAP_H)
        )
    px, py = _loc_cell_center(loc, grid, SCREEN_W, SCREEN_H)
    if kind == SELECT_RECT:
        # the rectangle spans the chosen grid cell
        half_w = SCREEN_W / grid[0] / 2.0
        half_h = SCREEN_H / grid[1] / 2.0
        return HumanAction(
            kind, screen_rect=(px - half_w, py - half_h, px + half_w, py + half_h)
        )
    return HumanAction(kind, screen_point=(px, py))


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    return int(rng.choice(len(probs), p=probs / probs.sum()))


@dataclass
class _StepSample:
    obs: np.ndarray
    kind_mask: np.ndarray
    index_mask: np.ndarray
    kind: int
    index: int
    loc: int
    logp: float
    action: object


def sample_step(
    params, state, ui, interface: str, cfg: TrainConfig, rng: np.random.Generator
) -> _StepSample:
    obs = encode_observation(state, interface, ui)
    kind_mask, index_masks = _kind_masks(state, interface, cfg)
    cache = net.forward_trunk(params, obs[None, :])
    core = cache["core"]
    kind_probs = net.masked_softmax(
        net.head_logits(params, "kind", core), kind_mask[None, :]
    )[0]
    kind_i = _sample(kind_probs, rng)
    kinds = interface_kinds(interface)
    kind = kinds[kind_i]
    logp = float(np.log(kind_probs[kind_i]))

    cond = net.cond_input(params, core, np.asarray([kind_i]))
    idx = -1
    index_mask = np.zeros(state.cfg.max_entities, dtype=bool)
    if interface == "raw":
        index_mask = index_masks[kind]
        idx_probs = net.masked_softmax(
            net.head_logits(params, "idx", cond), index_mask[None, :]
        )[0]
        idx = _sample(idx_probs, rng)
        logp += float(np.log(idx_probs[idx]))

    loc = -1
    needs_loc = (interface == "raw" and kind == BUILD_PYLON) or (
        interface == "human" and kind in LOCATED_HUMAN_KINDS
    )
    if needs_loc:
        n_loc = params["loc_b"].shape[0]
        loc_probs = net.masked_softmax(
            net.head_logits(params, "loc", cond), np.ones((1, n_loc), bool)
        )[0]
        loc = _sample(loc_probs, rng)
        logp += float(np.log(loc_probs[loc]))

    action = _action_from_heads(interface, state, kind_i, idx, loc, cfg)
    return _StepSample(obs, kind_mask, index_mask, kind_i, idx, loc, logp, action)


def random_step(
    state, ui, interface: str, cfg: TrainConfig, rng: np.random.Generator
):
    """Uniform masked action: the random-policy baseline."""
    kind_mask, index_masks = _kind_masks(state, interface, cfg)
    kinds = interface_kinds(interface)
    valid = np.flatnonzero(kind_mask)
    kind_i = int(rng.choice(valid))
    kind = kinds[kind_i]
    idx = -1
    if interface == "raw":
        idx = int(rng.choice(np.flatnonzero(index_masks[kind])))
    loc = -1
    needs_loc = (interface == "raw" and kind == BUILD_PYLON) or (
        interface == "human" and kind in LOCATED_HUMAN_KINDS
    )
    if needs_loc:
        gw, gh = cfg.grid_dims(interface)
        loc = int(rng.integers(gw * gh))
    return _action_from_heads(interface, state, kind_i, idx, loc, cfg)


def rollout(
    params,
    interface: str,
    spec: ProblemSpec,
    sim_cfg: SimConfig,
    seed: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
    collect: bool = True,
) -> tuple[float, losses.Trajectory | None, EpisodeRunner]:
    runner = EpisodeRunner(sim_cfg, spec, seed, step_mul=cfg.step_mul)
    steps: list[_StepSample] = []
    rewards: list[float] = []
    while not runner.done:
        if params is None:
            action = random_step(runner.state, runner.ui, interface, cfg, rng)
            result = runner.step(action)
            rewards.append(float(result.reward))
            continue
        s = sample_step(params, runner.state, runner.ui, interface, cfg, rng)
        result = runner.step(s.action)
        rewards.append(float(result.reward))
        if collect:
            steps.append(s)
    traj = None
    if collect and steps:
        traj = losses.Trajectory(
            obs=np.stack([s.obs for s in steps]),
            kind_mask=np.stack([s.kind_mask for s in steps]),
            index_mask=np.stack([s.index_mask for s in steps]),
            kinds=np.array([s.kind for s in steps]),
            indices=np.array([s.index for s in steps]),
            locs=np.array([s.loc for s in steps]),
            behavior_logp=np.array([s.logp for s in steps]),
            rewards=np.array(rewards[: len(steps)]),
            bootstrap_value=0.0,  # fixed-length episodes end terminal
        )
    return float(runner.total_reward), traj, runner


def run_experiment(
    interface: str,
    episodes: int,
    cfg: TrainConfig,
    spec: ProblemSpec,
    sim_cfg: SimConfig | None = None,
) -> LearningCurve:
    """Train for a number of episodes, one update per episode.

    Deterministic for a fixed (interface, episodes, cfg, spec): all
    randomness flows from cfg.seed.
    """
    if interface not in ("raw", "human"):
        raise ValueError(f"unknown interface {interface!r}")
    sim_cfg = sim_cfg or SimConfig()
    rng = np.random.default_rng(cfg.seed)
    params = build_params(interface, sim_cfg, cfg, rng)
    optim = net.Adam(cfg.adam_config())
    loss_cfg = cfg.loss_config()
    curve = LearningCurve(
        interface=interface, spec=str(spec), seed=cfg.seed
    )
    for ep in range(episodes):
        env_seed = cfg.seed * 1_000_003 + ep
        ret, traj, _ = rollout(
            params, interface, spec, sim_cfg, env_seed, cfg, rng
        )
        stat = EpisodeStat(episode=ep, ret=ret)
        if traj is not None:
            # several off-policy corrected updates on the same episode;
            # V-trace handles the growing policy lag
            for _ in range(max(cfg.updates_per_episode, 1)):
                out, grads = losses.loss_and_grads(params, [traj], loss_cfg)
                optim.step(params, grads)
            stat.total_loss = out.total
            stat.policy_loss = out.policy_loss
            stat.value_loss = out.value_loss
            stat.entropy_loss = out.entropy_loss
        curve.episodes.append(stat)
    return curve


def scripted_greedy_action(state) -> RawAction | None:
    """Reference raw-interface policy: keep the production queue full,
    raise the food cap just before it binds, leave builders alone."""
    cfg = state.cfg
    view = entity_view(state)
    if state.minerals >= cfg.probe_cost and state.food_used < state.food_cap:
        return RawAction(PRODUCE_PROBE, 0, None)
    building = any(
        row.kind == PROBE and row.features[3] > 0 for row in view
    )
    low_headroom = state.food_cap - state.food_used <= 1
    if state.minerals >= cfg.pylon_cost and low_headroom and not building:
        idle = next(
            (r.index for r in view if r.kind == PROBE and r.features[3] == 0),
            None,
        )
        if idle is not None:
            probe = view[idle]
            for gx in range(8):
                for gy in range(8):
                    x = (gx + 0.5) * cfg.map_w / 8
                    y = (gy + 0.5) * cfg.map_h / 8
                    near = (
                        (x - probe.features[0]) ** 2
                        + (y - probe.features[1]) ** 2
                    ) <= cfg.build_range**2
                    if near and _placement_valid(state, x, y, cfg.pylon_radius):
                        return RawAction(BUILD_PYLON, idle, (x, y))
    return None


def random_baseline(
    interface: str,
    episodes: int,
    cfg: TrainConfig,
    spec: ProblemSpec,
    sim_cfg: SimConfig | None = None,
) -> list[float]:
    """Returns of the masked uniform random policy, the comparison
    oracle for the learning experiment."""
    sim_cfg = sim_cfg or SimConfig()
    rng = np.random.default_rng(cfg.seed + 777)
    rets = []
    for ep in range(episodes):
        env_seed = (cfg.seed + 777) * 1_000_003 + ep
        ret, _, _ = rollout(
            None, interface, spec, sim_cfg, env_seed, cfg, rng, collect=False
        )
        rets.append(ret)
    return rets


def gradient_check(
    params,
    trajs: list[losses.Trajectory],
    cfg: losses.LossConfig,
    n_coords: int = 120,
    # central differences in float64: larger steps push the roundoff
    # noise below the 1e-4 acceptance band without visible truncation
    eps: float = 1e-5,
    rng: np.random.Generator | None = None,
    grads=None,
) -> float:
    """Max relative error between analytic gradients and central finite
    differences of the loss, with value targets and advantages frozen
    at the current parameters."""
    rng = rng or np.random.default_rng(0)
    frozen = [losses.compute_targets(params, t, cfg) for t in trajs]
    if grads is None:
        _, grads = losses.loss_and_grads(params, trajs, cfg, frozen=frozen)

    def loss_at(p):
        out, _ = losses.loss_and_grads(p, trajs, cfg, frozen=frozen)
        return out.total

    keys = sorted(params)
    max_err = 0.0
    for _ in range(n_coords):
        key = keys[int(rng.integers(len(keys)))]
        flat_i = int(rng.integers(params[key].size))
        idx = np.unravel_index(flat_i, params[key].shape)
        p2 = {k: v.copy() for k, v in params.items()}
        p2[key][idx] += eps
        up = loss_at(p2)
        p2[key][idx] -= 2 * eps
        down = loss_at(p2)
        fd = (up - down) / (2 * eps)
        an = grads[key][idx]
        err = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        max_err = max(max_err, err)
    return max_err
