"""EKF propagation, Jacobian, gating, saturation and fusion tests."""

import numpy as np
import pytest

from gatepilot import quat
from gatepilot.ekf import (
    ATT,
    BACC,
    BGYR,
    POS,
    VEL,
    EkfConfig,
    EkfState,
    SaturationMonitor,
    ekf_jacobians,
    ekf_propagate,
    make_initial,
    predict,
    update,
)
from gatepilot.fusion import DelayedFusion
from gatepilot.pnp import PnpMeasurement

CFG = EkfConfig()
G = 9.81


def make_meas(pos, q, d=3.0, n_c=8, n_g=1, t=0.0):
    return PnpMeasurement(np.asarray(pos, float), np.asarray(q, float),
                          d_gate=d, n_corners=n_c, n_gates=n_g,
                          mode="full_pnp", timestamp=t)


def random_ekf_state(rng):
    x = np.zeros(16)
    x[POS] = rng.uniform(-20, 20, 3)
    x[VEL] = rng.uniform(-15, 15, 3)
    x[ATT] = quat.normalize(rng.normal(size=4))
    x[BACC] = rng.uniform(-0.5, 0.5, 3)
    x[BGYR] = rng.uniform(-0.05, 0.05, 3)
    return x


def propagate_with_noise(x, u, w, dt):
    """Independent noise-injected transcription of the process model."""
    x = np.asarray(x, float)
    out = x.copy()
    q = x[ATT]
    a = u[0:3] - x[BACC] - w[0:3]
    wb = u[3:6] - x[BGYR] - w[3:6]
    out[POS] = x[POS] + x[VEL] * dt
    out[VEL] = x[VEL] + (quat.rotate(q, a) + np.array([0, 0, G])) * dt
    out[ATT] = q + 0.5 * quat.multiply(q, np.r_[0.0, wb]) * dt
    out[BACC] = x[BACC] + w[6:9] * dt
    out[BGYR] = x[BGYR] + w[9:12] * dt
    return out


def test_jacobians_match_finite_differences():
    rng = np.random.default_rng(17)
    dt = 0.002
    h = 1e-6
    for _ in range(100):
        x = random_ekf_state(rng)
        u = np.concatenate([rng.uniform(-30, 30, 3), rng.uniform(-8, 8, 3)])
        f, l = ekf_jacobians(x, u, dt)
        f_fd = np.zeros_like(f)
        for j in range(16):
            dx = np.zeros(16)
            dx[j] = h
            f_fd[:, j] = (ekf_propagate(x + dx, u, dt)
                          - ekf_propagate(x - dx, u, dt)) / (2 * h)
        np.testing.assert_allclose(f_fd, f, rtol=1e-4, atol=1e-7)
        l_fd = np.zeros_like(l)
        for j in range(12):
            dw = np.zeros(12)
            dw[j] = h
            l_fd[:, j] = (propagate_with_noise(x, u, dw, dt)
                          - propagate_with_noise(x, u, -dw, dt)) / (2 * h)
        np.testing.assert_allclose(l_fd, l, rtol=1e-4, atol=1e-7)


def test_stationary_equilibrium():
    st = make_initial(p=[1.0, 2.0, -1.0], q=quat.identity())
    u = np.array([0.0, 0.0, -G, 0.0, 0.0, 0.0])
    for _ in range(1000):
        st = predict(st, u, 0.002, CFG)
    assert np.linalg.norm(st.p - [1.0, 2.0, -1.0]) < 1e-9
    assert np.linalg.norm(st.v) < 1e-9


def test_pure_yaw_integration():
    st = make_initial(p=np.zeros(3), q=quat.identity())
    u = np.array([0.0, 0.0, -G, 0.0, 0.0, np.pi / 2])
    for _ in range(2000):
        st = predict(st, u, 0.001, CFG)
    yaw = quat.to_euler(st.q)[2]
    assert yaw == pytest.approx(np.pi, abs=1e-4) or yaw == pytest.approx(
        -np.pi, abs=1e-4)


def test_covariance_stays_psd_long_run():
    rng = np.random.default_rng(3)
    st = make_initial(p=np.zeros(3), q=quat.identity())
    u0 = np.array([0.0, 0.0, -G, 0.0, 0.0, 0.0])
    for i in range(100_000):
        u = u0 + rng.normal(0, 0.5, 6) * [1, 1, 1, 0.05, 0.05, 0.05]
        st = predict(st, u, 0.002, CFG)
        if i % 40 == 0:
            meas = make_meas(st.p + rng.normal(0, 0.05, 3), st.q,
                             d=3.0, n_c=8, t=st.t)
            st, _, _ = update(st, meas, accept_att=True, cfg=CFG)
        if i % 5000 == 0:
            assert np.abs(st.P - st.P.T).max() < 1e-9
            assert np.linalg.eigvalsh(st.P).min() > -1e-9
            assert abs(np.linalg.norm(st.q) - 1.0) < 1e-9
    assert np.linalg.eigvalsh(st.P).min() > -1e-9


def test_gate_threshold_arithmetic():
    st = make_initial(p=np.zeros(3), q=quat.identity())
    # trace(P_pos) = 0.01, N_c = 8 -> threshold 10.24 m^2; 1 m offset passes
    st.P[POS, POS] = np.eye(3) * (0.01 / 3.0)
    meas = make_meas([1.0, 0.0, 0.0], quat.identity(), n_c=8)
    _, ok, _ = update(st, meas, accept_att=True, cfg=CFG)
    assert ok
    # trace 1e-6, 1 m innovation, N_c = 4 -> 1 > 2.56e-4: rejected
    st2 = make_initial(p=np.zeros(3), q=quat.identity())
    st2.P[POS, POS] = np.eye(3) * (1e-6 / 3.0)
    meas2 = make_meas([1.0, 0.0, 0.0], quat.identity(), n_c=4)
    out, ok2, _ = update(st2, meas2, accept_att=True, cfg=CFG)
    assert not ok2
    assert np.array_equal(out.x, st2.x)  # rejected: state unchanged


def test_gate_monotone_in_corner_count():
    st = make_initial(p=np.zeros(3), q=quat.identity())
    st.P[POS, POS] = np.eye(3) * (0.02 / 3.0)
    accepted = []
    for n_c in range(4, 17):
        meas = make_meas([0.9, 0.0, 0.0], quat.identity(), n_c=n_c)
        _, ok, _ = update(st.copy(), meas, accept_att=True, cfg=CFG)
        accepted.append(ok)
    # once accepted, higher corner counts never flip back to rejected
    first = accepted.index(True)
    assert all(accepted[first:])


def test_perfect_measurement_limit():
    st = make_initial(p=np.zeros(3), q=quat.identity())
    st.P[POS, POS] = np.eye(3) * 10.0  # keep the outlier gate open
    target = np.array([0.5, -0.3, 0.2])
    meas = PnpMeasurement(target, quat.identity(), d_gate=0.01, n_corners=16,
                          n_gates=2, mode="full_pnp", timestamp=0.0)
    assert meas.sigma2_pos < 1e-8
    out, ok, _ = update(st, meas, accept_att=False, cfg=CFG)
    assert ok
    np.testing.assert_allclose(out.p, target, atol=1e-4)


def test_attitude_rows_skipped_when_not_accepted():
    st = make_initial(p=np.zeros(3), q=quat.identity())
    wrong_q = quat.from_euler(0.0, 0.0, 0.8)
    meas = make_meas([0.01, 0.0, 0.0], wrong_q, n_c=8)
    out, ok, _ = update(st, meas, accept_att=False, cfg=CFG)
    assert ok
    assert quat.angle_between(out.q, quat.identity()) < 1e-12


def test_quaternion_hemisphere_flip():
    st = make_initial(p=np.zeros(3), q=quat.identity())
    st.P[ATT, ATT] = np.eye(4) * 0.01
    meas = make_meas([0.0, 0.0, 0.0], -quat.identity(), n_c=8)
    out, ok, _ = update(st, meas, accept_att=True, cfg=CFG)
    assert ok
    # a negated (same-attitude) measurement must not yank the state
    assert quat.angle_between(out.q, quat.identity()) < 1e-9


def test_innovation_whitening():
    rng = np.random.default_rng(21)
    dt = 0.002
    cfg = EkfConfig()
    st = make_initial(p=np.zeros(3), q=quat.identity(), cfg=cfg)
    sigma_a = cfg.accel_noise / np.sqrt(dt)
    sigma_g = cfg.gyro_noise / np.sqrt(dt)
    d, n_c, n_g = 3.0, 8, 1
    meas0 = make_meas(np.zeros(3), quat.identity(), d=d, n_c=n_c, n_g=n_g)
    sp = np.sqrt(meas0.sigma2_pos)
    sq = np.sqrt(meas0.sigma2_quat)
    nis_values = []
    for k in range(600):
        for _ in range(10):
            u = np.array([0.0, 0.0, -G, 0.0, 0.0, 0.0])
            u[0:3] += rng.normal(0, sigma_a, 3)
            u[3:6] += rng.normal(0, sigma_g, 3)
            st = predict(st, u, dt, cfg)
        z_pos = rng.normal(0, sp, 3)
        z_q = quat.identity() + rng.normal(0, sq, 4)
        meas = make_meas(z_pos, z_q, d=d, n_c=n_c, n_g=n_g, t=st.t)
        st, ok, nis = update(st, meas, accept_att=True, cfg=cfg)
        if ok and k >= 100:
            nis_values.append(nis)
    mean_nis = np.mean(nis_values)
    assert 0.8 * 7 <= mean_nis <= 1.2 * 7


def test_saturation_monitor_examples():
    mon = SaturationMonitor(cfg=EkfConfig(saturation_alpha=0.0))
    a, flag = mon.update([0.0, 0.0, -9.81], [0.0, 0.0, -9.81])
    assert not flag and a[2] == -9.81
    # clipped z-axis: model -70, measured railed at -16g
    mon.reset()
    a, flag = mon.update([0.0, 0.0, -156.96], [0.0, 0.0, -70.0])
    assert abs(-70.0 - -156.96) > 22.0
    assert flag and a[2] == -70.0


def test_saturation_monitor_filters_with_same_lag():
    cfg = EkfConfig(saturation_alpha=0.9)
    mon = SaturationMonitor(cfg=cfg)
    # a transient one-sample spike must not trigger through the LPF
    mon.update([0.0, 0.0, -9.81], [0.0, 0.0, -9.81])
    a, flag = mon.update([0.0, 0.0, -150.0], [0.0, 0.0, -9.81])
    assert not flag  # (1-alpha) * 140 = 14 < 22
    assert a[2] == -150.0  # passes the raw sample through


def test_delayed_fusion_zero_delay_matches_naive():
    rng = np.random.default_rng(5)
    init = make_initial(p=np.zeros(3), q=quat.identity())
    comp = DelayedFusion(init.copy(), naive=False)
    naive = DelayedFusion(init.copy(), naive=True)
    t = 0.0
    for k in range(500):
        t += 0.002
        u = np.array([0, 0, -G, 0, 0, 0]) + rng.normal(0, 0.1, 6)
        comp.on_imu(t, u)
        naive.on_imu(t, u)
        if k % 40 == 39:
            meas = make_meas(rng.normal(0, 0.05, 3), quat.identity(), t=t)
            comp.on_measurement(meas, accept_att=True)
            naive.on_measurement(meas, accept_att=True)
    assert np.array_equal(comp.head.x, naive.head.x)
    assert np.allclose(comp.head.P, naive.head.P, atol=1e-12)


def test_delayed_fusion_replay_deterministic():
    rng = np.random.default_rng(6)
    events = []
    t = 0.0
    for k in range(400):
        t += 0.002
        events.append(("imu", t, rng.normal(0, 0.2, 6) + [0, 0, -G, 0, 0, 0]))
        if k % 37 == 36:
            events.append(("meas", t - 0.017,
                           rng.normal(0, 0.05, 3)))

    def run():
        eng = DelayedFusion(make_initial(p=np.zeros(3), q=quat.identity()))
        for kind, ts, payload in events:
            if kind == "imu":
                eng.on_imu(ts, payload)
            else:
                eng.on_measurement(make_meas(payload, quat.identity(), t=ts),
                                   accept_att=True)
        return eng.head

    a = run()
    b = run()
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.P, b.P)


def test_delayed_fusion_drops_stale_measurements():
    eng = DelayedFusion(make_initial(p=np.zeros(3), q=quat.identity()))
    t = 0.0
    for _ in range(100):
        t += 0.002
        eng.on_imu(t, np.array([0, 0, -G, 0, 0, 0.0]))
    eng.on_measurement(make_meas(np.zeros(3), quat.identity(), t=0.1),
                       accept_att=True)
    before = eng.dropped
    eng.on_measurement(make_meas(np.zeros(3), quat.identity(), t=0.05),
                       accept_att=True)
    assert eng.dropped == before + 1
