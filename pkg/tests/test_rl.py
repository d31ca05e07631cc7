"""Learning stack tests: value targets, losses, gradients, the
optimizer, observation encoding, and rollout plumbing."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairrts.fairness import PRESETS, parse_spec
from fairrts.rl import net
from fairrts.rl.losses import (
    LossConfig,
    Trajectory,
    compute_losses,
    compute_targets,
    loss_and_grads,
    upgo_returns,
    vtrace,
)
from fairrts.rl.obs import encode_observation, obs_dim
from fairrts.rl.train import (
    TrainConfig,
    build_params,
    gradient_check,
    random_baseline,
    rollout,
    run_experiment,
    scripted_greedy_action,
)
from fairrts.sim import SimConfig, new_game


def nstep_return_oracle(rewards, values, bootstrap, gamma):
    """Discounted n-step return to episode end, independent recursion."""
    T = len(rewards)
    out = np.zeros(T)
    acc = bootstrap
    for t in range(T - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def vtrace_bruteforce(b_logp, t_logp, rewards, values, bootstrap, gamma,
                      rho_bar, c_bar):
    """Direct evaluation of the corrected-target sum, written separately
    from the production recursion."""
    T = len(rewards)
    ratios = np.exp(np.asarray(t_logp) - np.asarray(b_logp))
    rhos = np.minimum(rho_bar, ratios)
    cs = np.minimum(c_bar, ratios)
    v_next = np.append(values[1:], bootstrap)
    deltas = rhos * (rewards + gamma * v_next - values)
    vs = np.zeros(T)
    for s in range(T):
        total = values[s]
        for t in range(s, T):
            prod = 1.0
            for i in range(s, t):
                prod *= cs[i]
            total += gamma ** (t - s) * prod * deltas[t]
        vs[s] = total
    return vs


class TestVtrace:
    def test_on_policy_equals_nstep_oracle(self):
        rng = np.random.default_rng(0)
        T = 25
        rewards = rng.normal(size=T)
        values = rng.normal(size=T)
        logp = rng.normal(size=T)
        vs, _ = vtrace(
            logp, logp, rewards, values, 0.5, 0.9,
            rho_bar=np.inf, c_bar=np.inf,
        )
        oracle = nstep_return_oracle(rewards, values, 0.5, 0.9)
        assert np.max(np.abs(vs - oracle)) <= 1e-10

    def test_three_step_hand_case_vs_bruteforce(self):
        # ratios 0.5, 2.0 (clipped to 1), 1.0
        b_logp = np.array([0.0, 0.0, 0.0])
        t_logp = np.log(np.array([0.5, 2.0, 1.0]))
        rewards = np.array([1.0, -1.0, 2.0])
        values = np.array([0.3, -0.2, 0.5])
        vs, _ = vtrace(b_logp, t_logp, rewards, values, 0.25, 0.9)
        ref = vtrace_bruteforce(
            b_logp, t_logp, rewards, values, 0.25, 0.9, 1.0, 1.0
        )
        assert np.allclose(vs, ref, atol=1e-12)

    def test_pg_advantage_uses_corrected_next_value(self):
        rewards = np.array([1.0, 1.0])
        values = np.array([0.0, 0.0])
        logp = np.zeros(2)
        vs, adv = vtrace(logp, logp, rewards, values, 0.0, 1.0)
        assert adv[0] == pytest.approx(rewards[0] + vs[1] - values[0])

    @given(T=st.integers(1, 12), seed=st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_recursion_matches_bruteforce(self, T, seed):
        rng = np.random.default_rng(seed)
        b = rng.normal(size=T)
        t = rng.normal(size=T)
        rewards = rng.normal(size=T)
        values = rng.normal(size=T)
        vs, _ = vtrace(b, t, rewards, values, 0.1, 0.95)
        ref = vtrace_bruteforce(b, t, rewards, values, 0.1, 0.95, 1.0, 1.0)
        assert np.allclose(vs, ref, atol=1e-9)


class TestUpgo:
    def test_bootstraps_through_good_futures(self):
        # q_next always >= value: full discounted return
        rewards = np.array([1.0, 1.0, 1.0])
        values = np.zeros(3)
        g = upgo_returns(rewards, values, 0.0, 1.0)
        assert np.allclose(g, [3.0, 2.0, 1.0])

    def test_cuts_to_value_on_bad_futures(self):
        rewards = np.array([0.0, -5.0, 0.0])
        values = np.array([0.0, 2.0, 0.0])
        g = upgo_returns(rewards, values, 0.0, 1.0)
        # at t=0 the one-step lookahead r1 + v2 = -5 < v1 = 2, so the
        # return cuts to r0 + v1
        assert g[0] == pytest.approx(2.0)


class TestNet:
    def params(self, n_loc=6):
        rng = np.random.default_rng(0)
        return net.init_params(rng, 10, 3, 4, n_loc)

    @given(seed=st.integers(0, 200))
    @settings(max_examples=40, deadline=None)
    def test_masked_softmax_normalizes_and_masks(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(5, 7)) * 10
        mask = rng.random((5, 7)) > 0.4
        mask[:, 0] = True  # at least one valid entry per row
        p = net.masked_softmax(logits, mask)
        assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all(p[~mask] < 1e-12)

    def test_entropy_bounds(self):
        p = net.masked_softmax(
            np.random.default_rng(1).normal(size=(20, 9)),
            np.ones((20, 9), bool),
        )
        h = net.entropy(p)
        assert np.all(h >= 0.0)
        assert np.all(h <= np.log(9) + 1e-9)

    def test_policy_forward_heads_normalize(self):
        params = self.params()
        obs = np.random.default_rng(2).normal(size=10)
        dists, v = net.policy_forward(params, obs, np.ones(3, bool))
        for name, p in dists.items():
            assert p.sum() == pytest.approx(1.0, abs=1e-6), name
        assert isinstance(v, float)

    def test_policy_forward_dim_check(self):
        with pytest.raises(ValueError):
            net.policy_forward(self.params(), np.zeros(11), np.ones(3, bool))

    def test_adam_single_step_hand_computed(self):
        cfg = net.AdamConfig(
            learning_rate=0.1, beta1=0.0, beta2=0.99,
            epsilon=1e-5, weight_decay=0.0,
        )
        params = {"w": np.array([1.0])}
        grads = {"w": np.array([2.0])}
        opt = net.Adam(cfg)
        opt.step(params, grads)
        # beta1=0: m_hat = g; v_hat = g^2 after bias correction
        expect = 1.0 - 0.1 * 2.0 / (np.sqrt(4.0) + 1e-5)
        assert params["w"][0] == pytest.approx(expect, rel=1e-9)

    def test_adam_rejects_nonfinite(self):
        opt = net.Adam(net.AdamConfig())
        with pytest.raises(FloatingPointError):
            opt.step({"w": np.zeros(1)}, {"w": np.array([np.nan])})

    def test_functional_adam_matches_stateful(self):
        cfg = net.AdamConfig()
        p1 = {"w": np.array([1.0, -2.0])}
        p2 = {"w": np.array([1.0, -2.0])}
        g = {"w": np.array([0.3, -0.7])}
        opt = net.Adam(cfg)
        opt.step(p1, g)
        out, _, _ = net.adam_step(p2, g, cfg, 1)
        assert np.allclose(p1["w"], out["w"])


class TestObservation:
    def test_dims(self):
        assert obs_dim("raw", 8) == 8 * 7 + 5
        assert obs_dim("human", 8) == 8 * 7 + 5 + 8 + 2

    def test_values_bounded(self):
        state = new_game(SimConfig(), 0)
        for interface in ("raw", "human"):
            v = encode_observation(state, interface)
            assert v.shape == (obs_dim(interface, 8),)
            assert np.all(v >= -1.0) and np.all(v <= 1.0)

    def test_mineral_reserve_feature_decreases(self):
        from fairrts.sim import advance

        state = new_game(SimConfig(), 0)
        before = encode_observation(state, "raw")[8 * 7 + 1]
        for _ in range(64):
            advance(state)
        after = encode_observation(state, "raw")[8 * 7 + 1]
        assert after < before


def short_cfg():
    return SimConfig(max_steps=160)


def make_trajectory(interface="raw", seed=0):
    cfg = TrainConfig()
    rng = np.random.default_rng(seed)
    params = build_params(interface, short_cfg(), cfg, rng)
    spec = parse_spec(PRESETS["level1" if interface == "raw" else "level4"])
    _, traj, _ = rollout(params, interface, spec, short_cfg(), seed, cfg, rng)
    return params, traj


class TestLosses:
    def test_losses_finite_and_decomposed(self):
        params, traj = make_trajectory()
        cfg = LossConfig()
        out = compute_losses([traj], params, cfg)
        parts = (
            out.policy_loss
            + cfg.upgo_weight * out.upgo_loss
            + out.value_loss
            + cfg.entropy_weight * out.entropy_loss
        )
        assert np.isfinite(out.total)
        assert out.total == pytest.approx(parts)

    def test_empty_trajectory_set_rejected(self):
        params, _ = make_trajectory()
        with pytest.raises(ValueError):
            compute_losses([], params, LossConfig())

    def test_frozen_targets_reproducible(self):
        params, traj = make_trajectory()
        cfg = LossConfig()
        t1 = compute_targets(params, traj, cfg)
        t2 = compute_targets(params, traj, cfg)
        assert np.allclose(t1.vs, t2.vs)

    def test_gradient_check_raw(self):
        params, traj = make_trajectory("raw", seed=3)
        err = gradient_check(params, [traj], LossConfig(), n_coords=60)
        assert err < 1e-4

    def test_gradient_matches_frozen_loss_direction(self):
        params, traj = make_trajectory()
        cfg = LossConfig()
        frozen = [compute_targets(params, traj, cfg)]
        out0, grads = loss_and_grads(params, [traj], cfg, frozen=frozen)
        stepped = {k: v - 1e-4 * grads[k] for k, v in params.items()}
        out1, _ = loss_and_grads(stepped, [traj], cfg, frozen=frozen)
        assert out1.total < out0.total


class TestRollout:
    def test_deterministic_given_seeds(self):
        cfg = TrainConfig()
        spec = parse_spec(PRESETS["level1"])
        rets = []
        for _ in range(2):
            rng = np.random.default_rng(9)
            params = build_params("raw", short_cfg(), cfg, rng)
            ret, traj, _ = rollout(
                params, "raw", spec, short_cfg(), 5, cfg, rng
            )
            rets.append((ret, traj.behavior_logp.tobytes()))
        assert rets[0] == rets[1]

    def test_trajectory_lengths_consistent(self):
        _, traj = make_trajectory()
        T = len(traj.rewards)
        assert traj.obs.shape[0] == T
        assert traj.kinds.shape == (T,)
        assert T == short_cfg().max_steps // TrainConfig().step_mul

    def test_random_rollout_collects_nothing(self):
        cfg = TrainConfig()
        spec = parse_spec(PRESETS["level1"])
        rng = np.random.default_rng(0)
        ret, traj, _ = rollout(
            None, "raw", spec, short_cfg(), 0, cfg, rng, collect=False
        )
        assert traj is None

    def test_unknown_interface_rejected(self):
        with pytest.raises(ValueError):
            run_experiment("macro", 1, TrainConfig(), parse_spec("SC^r_0{}"))


class TestScriptedPolicy:
    def test_full_episode_return(self):
        """Frozen oracle: the greedy reference policy reaches 17 extra
        workers on the default economy."""
        from fairrts.episode import EpisodeRunner

        spec = parse_spec(PRESETS["level1"])
        runner = EpisodeRunner(SimConfig(), spec, 1, step_mul=4)
        while not runner.done:
            runner.step(scripted_greedy_action(runner.state))
        assert runner.total_reward == 17

    def test_produces_when_affordable(self):
        state = new_game(SimConfig(), 0)
        state.minerals = 50
        action = scripted_greedy_action(state)
        assert action.kind == "ProduceProbe"

    def test_idles_when_broke(self):
        state = new_game(SimConfig(), 0)
        state.minerals = 0
        assert scripted_greedy_action(state) is None


class TestExperiment:
    def test_curve_shape_and_determinism(self):
        cfg = TrainConfig(seed=2)
        spec = parse_spec(PRESETS["level1"])
        a = run_experiment("raw", 3, cfg, spec, short_cfg())
        b = run_experiment("raw", 3, cfg, spec, short_cfg())
        assert len(a.episodes) == 3
        assert a.returns() == b.returns()
        assert a.interface == "raw" and a.seed == 2

    def test_zero_episodes(self):
        curve = run_experiment(
            "raw", 0, TrainConfig(), parse_spec(PRESETS["level1"]), short_cfg()
        )
        assert curve.episodes == []

    def test_random_baseline_deterministic(self):
        cfg = TrainConfig()
        spec = parse_spec(PRESETS["level1"])
        a = random_baseline("raw", 3, cfg, spec, short_cfg())
        b = random_baseline("raw", 3, cfg, spec, short_cfg())
        assert a == b and len(a) == 3
