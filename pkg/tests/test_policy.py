"""Observation, reward, network and PPO machinery tests."""

import numpy as np
import pytest

from gatepilot import quat
from gatepilot.camera import CameraModel
from gatepilot.dynamics import ModelParams, QuadState
from gatepilot.policy import MlpPolicy, OBS_DIM, RewardConfig, act, observe, reward
from gatepilot.policy.network import DEFAULT_OBS_SCALE, load_policy, save_policy
from gatepilot.policy.observation import observe_batch
from gatepilot.policy.ppo import PpoConfig, compute_gae
from gatepilot.policy.ppo_grad import ppo_loss, ppo_minibatch_grads
from gatepilot.policy.reward import REWARD_PRESETS
from gatepilot.track import EpisodeEvent, Gate, GateMap, load_track, desk_track_path

NOM = ModelParams()


@pytest.fixture(scope="module")
def desk():
    return load_track(desk_track_path())


def test_observation_at_gate_center(desk):
    g = desk.gates[0]
    st = QuadState.rest(p=g.center, yaw=g.yaw, omega0=NOM.omega_min)
    obs = observe(st, desk, 0, np.zeros(4), NOM.omega_max)
    np.testing.assert_allclose(obs[0:3], 0.0, atol=1e-12)
    assert obs[8] == pytest.approx(0.0, abs=1e-12)
    assert len(obs) == OBS_DIM == 24


def test_observation_before_gate(desk):
    g = desk.gates[0]
    x_g, _, _ = g.axes()
    st = QuadState.rest(p=g.center - 3.0 * x_g, yaw=g.yaw)
    obs = observe(st, desk, 0, np.zeros(4), NOM.omega_max)
    np.testing.assert_allclose(obs[0:3], [-3.0, 0.0, 0.0], atol=1e-12)


def test_observation_yawed_gate_velocity():
    g = Gate(np.array([5.0, 0.0, -1.5]), np.pi / 2)
    gmap = GateMap([g], bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))
    st = QuadState.rest(p=(0.0, 0.0, -1.5))
    st.v = np.array([1.0, 0.0, 0.0])
    obs = observe(st, gmap, 0, np.zeros(4), NOM.omega_max)
    # gate x is world +y; world +x velocity maps to gate -y
    np.testing.assert_allclose(obs[3:6], [0.0, -1.0, 0.0], atol=1e-12)


def test_observation_translation_equivariance(desk):
    rng = np.random.default_rng(0)
    offset = np.array([3.7, -1.2, -0.4])
    shifted_gates = [Gate(g.center + offset, g.yaw, g.inner_size,
                          g.outer_size, g.thickness) for g in desk.gates]
    shifted = GateMap(shifted_gates, desk.laps, desk.bounds, desk.start)
    for _ in range(20):
        st = QuadState(
            p=rng.uniform(-5, 5, 3), v=rng.uniform(-5, 5, 3),
            q=quat.normalize(rng.normal(size=4)),
            Omega=rng.uniform(-2, 2, 3),
            omega=rng.uniform(400, 3000, 4),
        )
        st2 = st.copy()
        st2.p = st.p + offset
        u_prev = rng.uniform(0, 1, 4)
        a = observe(st, desk, 1, u_prev, NOM.omega_max)
        b = observe(st2, shifted, 1, u_prev, NOM.omega_max)
        # gate-frame construction cancels the offset ((p+o)-(c+o) rounds
        # at the last ulp, so equality holds to floating-point roundoff)
        np.testing.assert_allclose(b, a, rtol=0.0, atol=1e-12)


def test_observe_batch_matches_scalar(desk):
    rng = np.random.default_rng(1)
    states = np.zeros((16, 17))
    for i in range(16):
        states[i, 0:3] = rng.uniform(-5, 15, 3)
        states[i, 3:6] = rng.uniform(-10, 10, 3)
        states[i, 6:10] = quat.normalize(rng.normal(size=4))
        states[i, 10:13] = rng.uniform(-3, 3, 3)
        states[i, 13:17] = rng.uniform(400, 3000, 4)
    targets = rng.integers(0, 3, 16)
    u_prev = rng.uniform(0, 1, (16, 4))
    batch = observe_batch(states, desk, targets, u_prev, NOM.omega_max)
    for i in range(16):
        single = observe(QuadState.from_vector(states[i]), desk,
                         int(targets[i]), u_prev[i], NOM.omega_max)
        np.testing.assert_allclose(batch[i], single, atol=1e-12)


def test_reward_progress_cap(desk):
    g = desk.gates[0]
    cfg = RewardConfig(lambda_prog=1.0, v_max=10.0, lambda_gate=0.0,
                       lambda_rate=0.0, lambda_offset=0.0, lambda_perc=0.0,
                       lambda_crash=0.0)
    x_g, _, _ = g.axes()
    a = QuadState.rest(p=g.center - 10.0 * x_g)
    b = QuadState.rest(p=g.center - 9.8 * x_g)
    r = reward(a, b, np.zeros(4), np.zeros(4), None, g, cfg, dt=0.01)
    assert r == pytest.approx(min(0.2, 0.1))  # capped at v_max * dt


def test_reward_gate_bonus(desk):
    g = desk.gates[0]
    cfg = RewardConfig(lambda_prog=0.0, lambda_gate=10.0, lambda_rate=0.0,
                       lambda_offset=0.0, lambda_perc=0.0, lambda_crash=0.0)
    ev = EpisodeEvent("gate_passed", 0, 0.2)
    st = QuadState.rest(p=g.center)
    r = reward(st, st, np.zeros(4), np.zeros(4), ev, g, cfg, dt=0.01)
    assert r == pytest.approx(10.0)


def test_reward_zero_case(desk):
    g = desk.gates[0]
    cfg = RewardConfig(lambda_prog=0.0, lambda_gate=0.0,
                       lambda_rate=0.001, lambda_offset=0.0,
                       lambda_perc=0.0, lambda_crash=0.0)
    st = QuadState.rest(p=g.center - np.array([3.0, 0, 0]))
    r = reward(st, st, np.zeros(4), np.zeros(4), None, g, cfg, dt=0.01)
    assert r == 0.0


def test_reward_all_zero_lambdas_identically_zero(desk):
    rng = np.random.default_rng(2)
    cfg = RewardConfig(0.0, 99.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    g = desk.gates[0]
    cam = CameraModel()
    for _ in range(200):
        a = QuadState.rest(p=rng.uniform(-5, 5, 3))
        b = QuadState.rest(p=rng.uniform(-5, 5, 3))
        b.Omega = rng.uniform(-20, 20, 3)
        ev = EpisodeEvent(rng.choice(["gate_passed", "gate_collision"]), 0, 0.1)
        r = reward(a, b, rng.uniform(0, 1, 4), rng.uniform(0, 1, 4), ev, g,
                   cfg, 0.01, cam)
        assert r == 0.0


def test_reward_crash_penalty(desk):
    g = desk.gates[0]
    cfg = REWARD_PRESETS["m17"]
    st = QuadState.rest(p=g.center)
    ev = EpisodeEvent("gate_collision", 0, 1.0)
    r = reward(st, st, np.zeros(4), np.zeros(4), ev, g, cfg, dt=0.01)
    assert r == pytest.approx(-10.0)


def test_act_zero_weights_gives_zero():
    pol = MlpPolicy.create(seed=0)
    for w in pol.pi.weights:
        w[:] = 0.0
    cmd, raw = act(pol, np.random.default_rng(0).normal(size=24),
                   deterministic=True)
    assert np.all(cmd == 0.0) and np.all(raw == 0.0)


def test_act_matches_straight_line_oracle():
    rng = np.random.default_rng(5)
    pol = MlpPolicy.create(seed=3, activation="tanh",
                           obs_scale=DEFAULT_OBS_SCALE)
    obs = rng.normal(size=24)
    x = obs / pol.obs_scale
    h = x
    for w, b in zip(pol.pi.weights[:-1], pol.pi.biases[:-1]):
        h = np.tanh(h @ w + b)
    oracle = h @ pol.pi.weights[-1] + pol.pi.biases[-1]
    _, raw = act(pol, obs, deterministic=True)
    np.testing.assert_allclose(raw, oracle, atol=1e-12)


def test_act_deterministic_repeatable():
    pol = MlpPolicy.create(seed=1)
    obs = np.random.default_rng(2).normal(size=24)
    outs = {act(pol, obs, deterministic=True)[0].tobytes() for _ in range(100)}
    assert len(outs) == 1


def test_act_stochastic_clamped():
    pol = MlpPolicy.create(seed=1, init_log_std=1.0)
    rng = np.random.default_rng(3)
    cmd, raw = act(pol, rng.normal(size=24), deterministic=False, rng=rng)
    assert np.all(cmd >= 0.0) and np.all(cmd <= 1.0)


def test_ppo_gradients_match_finite_differences():
    from gatepilot.policy.ppo import flatten_params, unflatten_params

    rng = np.random.default_rng(11)
    pol = MlpPolicy.create(hidden_pi=8, hidden_vf=8, seed=7)
    cfg = PpoConfig(seed=0)
    n = 32
    obs = rng.normal(size=(n, 24))
    mean = pol.action_mean(obs)
    raw = mean + np.exp(pol.log_std) * rng.standard_normal((n, 4))
    noise = (raw - mean) / np.exp(pol.log_std)
    logp_old = (-0.5 * np.sum(noise**2, axis=1) - np.sum(pol.log_std)
                - 2.0 * np.log(2.0 * np.pi))
    logp_old += rng.normal(0, 0.1, n)  # pretend the policy moved a little
    adv = rng.normal(size=n)
    ret = rng.normal(size=n)

    grad, _ = ppo_minibatch_grads(pol, obs, raw, logp_old, adv, ret, cfg)
    theta0 = flatten_params(pol)
    h = 1e-6
    idx = rng.choice(theta0.size, size=250, replace=False)
    for j in idx:
        th = theta0.copy()
        th[j] += h
        unflatten_params(pol, th)
        up = ppo_loss(pol, obs, raw, logp_old, adv, ret, cfg)
        th[j] -= 2 * h
        unflatten_params(pol, th)
        dn = ppo_loss(pol, obs, raw, logp_old, adv, ret, cfg)
        fd = (up - dn) / (2 * h)
        assert abs(fd - grad[j]) < 1e-4 * max(1.0, abs(fd)), (j, fd, grad[j])
    unflatten_params(pol, theta0)


def test_gae_against_bruteforce():
    rng = np.random.default_rng(4)
    t_len, n = 6, 3
    rew = rng.normal(size=(t_len, n))
    val = rng.normal(size=(t_len, n))
    term = np.zeros((t_len, n), dtype=bool)
    trunc = np.zeros((t_len, n), dtype=bool)
    term[3, 0] = True
    trunc[4, 1] = True
    boot = np.zeros((t_len, n))
    boot[4, 1] = 0.7
    last_values = rng.normal(size=n)
    gamma, lam = 0.9, 0.8
    adv, rets = compute_gae(rew, val, term, trunc, boot, last_values,
                            gamma, lam)

    # brute force: deltas and discounted sums, resetting at episode ends
    for i in range(n):
        expected = np.zeros(t_len)
        for t in range(t_len - 1, -1, -1):
            done = term[t, i] or trunc[t, i]
            v_next = last_values[i] if t == t_len - 1 else val[t + 1, i]
            if done:
                v_next = boot[t, i] if trunc[t, i] else 0.0
            delta = rew[t, i] + gamma * v_next - val[t, i]
            nxt = 0.0 if (done or t == t_len - 1) else expected[t + 1]
            expected[t] = delta + gamma * lam * nxt
        np.testing.assert_allclose(adv[:, i], expected, atol=1e-12)
    np.testing.assert_allclose(rets, adv + val, atol=1e-12)


def test_weights_roundtrip(tmp_path):
    pol = MlpPolicy.create(seed=9, activation="relu", hidden_vf=64,
                           obs_scale=DEFAULT_OBS_SCALE, init_log_std=-0.7)
    path = tmp_path / "weights.gpw"
    save_policy(pol, path)
    assert path.with_suffix(".gpw.json").exists()
    again = load_policy(path)
    obs = np.random.default_rng(0).normal(size=(5, 24))
    np.testing.assert_array_equal(pol.action_mean(obs), again.action_mean(obs))
    np.testing.assert_array_equal(pol.value(obs), again.value(obs))
    np.testing.assert_array_equal(pol.log_std, again.log_std)
    assert again.meta["activation"] == "relu"


def test_weights_reject_garbage(tmp_path):
    p = tmp_path / "bad.gpw"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_policy(p)


def test_entropy_coefficient_direction():
    # identical synthetic updates, only ent_coef differs: the zero-bonus
    # run must end with lower action entropy (log_std sum)
    rng = np.random.default_rng(6)
    obs = rng.normal(size=(256, 24))
    results = {}
    for coef in (0.0, 0.005):
        pol = MlpPolicy.create(hidden_pi=16, hidden_vf=16, seed=5)
        from gatepilot.policy.ppo import Adam, flatten_params, unflatten_params

        cfg = PpoConfig(ent_coef=coef, seed=0)
        opt = Adam(flatten_params(pol).size, 3e-3)
        local = np.random.default_rng(9)
        for _ in range(60):
            mean = pol.action_mean(obs)
            raw = mean + np.exp(pol.log_std) * local.standard_normal((256, 4))
            noise = (raw - mean) / np.exp(pol.log_std)
            logp = (-0.5 * np.sum(noise**2, axis=1) - np.sum(pol.log_std)
                    - 2.0 * np.log(2.0 * np.pi))
            adv = local.normal(size=256)
            ret = local.normal(size=256)
            g, _ = ppo_minibatch_grads(pol, obs, raw, logp, adv, ret, cfg)
            unflatten_params(pol, opt.step(flatten_params(pol), g))
        results[coef] = float(np.sum(pol.log_std))
    assert results[0.0] < results[0.005]


def test_ppo_update_noop_when_advantage_zero():
    # zero advantage and no entropy bonus: the policy head must not move
    from gatepilot.policy.ppo import PpoConfig

    rng = np.random.default_rng(8)
    pol = MlpPolicy.create(hidden_pi=8, hidden_vf=8, seed=2)
    cfg = PpoConfig(ent_coef=0.0, vf_coef=0.5, seed=0)
    obs = rng.normal(size=(64, 24))
    mean = pol.action_mean(obs)
    raw = mean + np.exp(pol.log_std) * rng.standard_normal((64, 4))
    noise = (raw - mean) / np.exp(pol.log_std)
    logp = (-0.5 * np.sum(noise**2, axis=1) - np.sum(pol.log_std)
            - 2.0 * np.log(2.0 * np.pi))
    adv = np.zeros(64)
    ret = rng.normal(size=64)
    g, _ = ppo_minibatch_grads(pol, obs, raw, logp, adv, ret, cfg)
    n_pi = sum(w.size for w in pol.pi.weights) + sum(b.size for b in pol.pi.biases)
    assert np.all(g[:n_pi] == 0.0)
    assert np.all(g[-4:] == 0.0)        # log_std untouched
    assert np.any(g[n_pi:-4] != 0.0)    # value head still learns