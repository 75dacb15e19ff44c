"""PnP round-trip, multi-gate benefit and de-rotated fallback tests."""

import numpy as np
import pytest

from gatepilot import quat
from gatepilot.camera import CameraModel
from gatepilot.pnp import (
    Correspondence,
    accept_attitude,
    derotated_position,
    make_measurement,
    object_points,
    solve_pnp,
    PnpMeasurement,
)
from gatepilot.track import Gate, GateMap
from gatepilot.vision import gate_corners_3d

CAM = CameraModel(mount_pitch_deg=0.0)
BOUNDS = np.array([[-50, 100], [-50, 50], [-50, 50.0]])


def two_gate_map(d1=4.0, d2=9.0):
    g1 = Gate(np.array([d1, 0.0, 0.0]), np.pi)
    g2 = Gate(np.array([d2, 1.5, -0.5]), np.pi)
    return GateMap([g1, g2], bounds=BOUNDS)


def perfect_corrs(gmap, p, q, gate_corner_pairs):
    corrs = []
    for gi, ci in gate_corner_pairs:
        pt = gate_corners_3d(gmap.gates[gi])[ci]
        px, ok = CAM.project_world(p, q, pt)
        assert ok
        corrs.append(Correspondence(gi, ci, px))
    return corrs


def test_roundtrip_eight_corners_exact():
    gmap = two_gate_map()
    p_true = np.array([0.1, -0.2, -0.3])
    q_true = quat.from_euler(0.02, -0.03, 0.05)
    corrs = perfect_corrs(gmap, p_true, q_true, [(0, k) for k in range(8)])
    sol = solve_pnp(corrs, CAM, gmap)
    assert sol is not None and sol.converged
    assert np.linalg.norm(sol.p - p_true) < 1e-6
    assert quat.angle_between(sol.q, q_true) < 1e-6
    assert sol.rms_px < 1e-6


def test_roundtrip_with_seed_pose():
    gmap = two_gate_map()
    p_true = np.array([0.0, 0.3, -0.6])
    q_true = quat.from_euler(-0.04, 0.06, -0.1)
    corrs = perfect_corrs(gmap, p_true, q_true, [(0, k) for k in range(8)])
    seed = (p_true + np.array([0.4, -0.3, 0.2]),
            quat.from_euler(0.0, 0.0, 0.0))
    sol = solve_pnp(corrs, CAM, gmap, seed_pose=seed)
    assert np.linalg.norm(sol.p - p_true) < 1e-6
    assert quat.angle_between(sol.q, q_true) < 1e-6


def test_four_plus_one_noise_free_exact():
    gmap = two_gate_map()
    p_true = np.zeros(3)
    q_true = quat.identity()
    pairs = [(0, k) for k in range(4, 8)] + [(1, 5)]
    corrs = perfect_corrs(gmap, p_true, q_true, pairs)
    sol = solve_pnp(corrs, CAM, gmap)
    assert sol is not None
    assert np.linalg.norm(sol.p - p_true) < 1e-6
    assert quat.angle_between(sol.q, q_true) < 1e-6


def test_three_points_insufficient():
    gmap = two_gate_map()
    corrs = perfect_corrs(gmap, np.zeros(3), quat.identity(),
                          [(0, 0), (0, 1), (0, 2)])
    assert solve_pnp(corrs, CAM, gmap) is None


def test_second_gate_corner_improves_heading():
    rng = np.random.default_rng(42)
    gmap = two_gate_map(d1=4.0, d2=9.0)
    p_true = np.zeros(3)
    q_true = quat.identity()
    base_pairs = [(0, k) for k in range(4, 8)]
    plus_pairs = base_pairs + [(1, 5)]
    err_base, err_plus = [], []
    for _ in range(500):
        for pairs, errs in ((base_pairs, err_base), (plus_pairs, err_plus)):
            corrs = perfect_corrs(gmap, p_true, q_true, pairs)
            for c in corrs:
                c.px = c.px + rng.normal(0.0, 0.5, 2)
            sol = solve_pnp(corrs, CAM, gmap,
                            seed_pose=(p_true, q_true))
            assert sol is not None
            yaw = quat.to_euler(sol.q)[2]
            errs.append(abs(yaw))
    med_base = np.median(err_base)
    med_plus = np.median(err_plus)
    assert med_plus < med_base


def test_derotated_matches_full_with_true_attitude():
    gmap = two_gate_map()
    p_true = np.array([0.25, -0.1, -0.4])
    q_true = quat.from_euler(0.03, 0.02, -0.07)
    corrs = perfect_corrs(gmap, p_true, q_true, [(0, k) for k in range(8)])
    sol = solve_pnp(corrs, CAM, gmap)
    g = gmap.gates[0]
    r_wc = quat.to_matrix(sol.q) @ CAM.r_cam_to_body()
    rel_cam = r_wc.T @ (g.center - sol.p)
    pos = derotated_position(rel_cam, q_true, g, CAM)
    assert np.linalg.norm(pos - sol.p) < 1e-6


def test_derotated_heading_error_small_angle():
    # 2 degree heading error at 10 m: lateral error ~ 10 sin(2 deg)
    g = Gate(np.array([10.0, 0.0, 0.0]), np.pi)
    rel_cam = CAM.world_to_cam(np.zeros(3), quat.identity(), g.center)
    q_bad = quat.from_euler(0.0, 0.0, np.deg2rad(2.0))
    pos = derotated_position(rel_cam, q_bad, g, CAM)
    expected = 10.0 * np.sin(np.deg2rad(2.0))
    assert np.linalg.norm(pos) == pytest.approx(expected, rel=0.05)


def test_mode_selection_rules():
    sol_p = np.zeros(3)
    gmap = two_gate_map(d1=7.0)

    class FakeSol:
        p = sol_p
        q = quat.identity()
        rms_px = 0.1

    corrs = [Correspondence(0, k, np.zeros(2)) for k in range(8)]
    meas = make_measurement(FakeSol(), corrs, gmap, CAM, quat.identity(), 0.0)
    assert meas.mode == "derotated"  # 7 m is outside the 2-5 m window
    gmap2 = two_gate_map(d1=3.0)
    meas2 = make_measurement(FakeSol(), corrs, gmap2, CAM, quat.identity(), 0.0)
    assert meas2.mode == "full_pnp"
    corrs5 = corrs[:5]
    meas3 = make_measurement(FakeSol(), corrs5, gmap2, CAM, quat.identity(), 0.0)
    assert meas3.mode == "derotated"  # five corners is not enough


def test_accept_attitude_scenarios():
    def meas(d, n_c, n_g):
        return PnpMeasurement(np.zeros(3), quat.identity(), d, n_c, n_g,
                              "full_pnp", 0.0)

    assert accept_attitude(meas(3.0, 8, 1), stationary=False)
    assert accept_attitude(meas(8.0, 5, 2), stationary=False)
    assert not accept_attitude(meas(8.0, 5, 1), stationary=False)
    assert accept_attitude(meas(8.0, 5, 1), stationary=True)
    assert not accept_attitude(meas(3.0, 6, 1), stationary=False)  # needs > 6


def test_measurement_variance_formulas():
    m = PnpMeasurement(np.zeros(3), quat.identity(), d_gate=4.0, n_corners=8,
                       n_gates=2, mode="full_pnp", timestamp=0.0)
    assert m.sigma2_pos == pytest.approx(0.02 * 16 / (64 * 2))
    assert m.sigma2_quat == pytest.approx(0.01 * 16 / (64 * 2))


def test_derotated_beats_full_pnp_far_away():
    rng = np.random.default_rng(3)
    g = Gate(np.array([8.0, 0.0, 0.0]), np.pi)
    gmap = GateMap([g], bounds=BOUNDS)
    q_true = quat.identity()
    p_true = np.zeros(3)
    full_err, dero_err = [], []
    for _ in range(500):
        corrs = perfect_corrs(gmap, p_true, q_true, [(0, k) for k in range(8)])
        for c in corrs:
            c.px = c.px + rng.normal(0.0, 1.0, 2)
        sol = solve_pnp(corrs, CAM, gmap, seed_pose=(p_true, q_true))
        full_err.append(np.linalg.norm(sol.p - p_true))
        r_wc = quat.to_matrix(sol.q) @ CAM.r_cam_to_body()
        rel_cam = r_wc.T @ (g.center - sol.p)
        pos = derotated_position(rel_cam, q_true, g, CAM)
        dero_err.append(np.linalg.norm(pos - p_true))
    assert np.median(dero_err) <= np.median(full_err)


def test_object_points_lookup():
    gmap = two_gate_map()
    pts = object_points([Correspondence(0, 0, np.zeros(2)),
                         Correspondence(1, 7, np.zeros(2))], gmap)
    np.testing.assert_allclose(pts[0], gate_corners_3d(gmap.gates[0])[0])
    np.testing.assert_allclose(pts[1], gate_corners_3d(gmap.gates[1])[7])
