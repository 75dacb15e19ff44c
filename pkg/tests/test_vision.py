"""Camera projection, gate selection, cropping and mask rendering tests."""

import numpy as np
import pytest

from gatepilot import quat
from gatepilot.camera import CameraModel
from gatepilot.track import Gate, GateMap
from gatepilot.vision import (
    CROP_SIZE,
    CropWindow,
    corrupt,
    crop,
    iou,
    project_corners,
    render_mask,
    select_gates,
)

# a straight-ahead camera simplifies face-on geometry checks
CAM0 = CameraModel(mount_pitch_deg=0.0)


def facing_map(d=4.0, inner=1.5, yaw=np.pi):
    """One gate at distance d straight ahead of a camera at the origin.

    The gate faces the camera (normal pointing back at it).
    """
    g = Gate(np.array([d, 0.0, 0.0]), yaw, inner_size=inner)
    return GateMap([g], bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))


def test_face_on_projection_square():
    d = 4.0
    gmap = facing_map(d)
    px, vis = project_corners(np.zeros(3), quat.identity(), CAM0, gmap)
    assert vis.all()
    inner = px[0, :4]
    side_px = CAM0.fx * 1.5 / d
    # symmetric about the principal point
    np.testing.assert_allclose(inner[:, 0].mean(), CAM0.cx, atol=1e-9)
    np.testing.assert_allclose(inner[:, 1].mean(), CAM0.cy, atol=1e-9)
    np.testing.assert_allclose(
        inner[:, 0].max() - inner[:, 0].min(), side_px, rtol=1e-12)
    np.testing.assert_allclose(
        inner[:, 1].max() - inner[:, 1].min(), CAM0.fy * 1.5 / d, rtol=1e-12)


def test_gate_behind_camera_not_visible():
    g = Gate(np.array([-4.0, 0.0, 0.0]), 0.0)
    gmap = GateMap([g], bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))
    _, vis = project_corners(np.zeros(3), quat.identity(), CAM0, gmap)
    assert not vis.any()


def test_select_gates_closest_two():
    gates = [Gate(np.array([d, 0.0, 0.0]), np.pi) for d in (4.0, 7.0, 11.0)]
    gmap = GateMap(gates, bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))
    sel = select_gates(np.zeros(3), quat.identity(), CAM0, gmap)
    assert sel == [0, 1]


def test_select_gates_rejects_oblique():
    fine = Gate(np.array([4.0, 0.0, 0.0]), np.pi)
    edge_on = Gate(np.array([5.0, 1.0, 0.0]), np.pi / 2)  # normal nearly
    # perpendicular to the line of sight
    gmap = GateMap([fine, edge_on],
                   bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))
    sel = select_gates(np.zeros(3), quat.identity(), CAM0, gmap)
    assert sel == [0]


def test_select_gates_rejects_center_outside_image():
    ahead = Gate(np.array([4.0, 0.0, 0.0]), np.pi)
    above = Gate(np.array([3.0, 0.0, -30.0]), np.pi)  # far above the FOV
    gmap = GateMap([ahead, above],
                   bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))
    sel = select_gates(np.zeros(3), quat.identity(), CAM0, gmap)
    assert sel == [0]


def test_select_gates_brute_force_rules():
    rng = np.random.default_rng(9)
    gates = [Gate(rng.uniform([2, -6, -3], [14, 6, -0.5]),
                  rng.uniform(-np.pi, np.pi)) for _ in range(8)]
    gmap = GateMap(gates, bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))
    for _ in range(50):
        p = rng.uniform([-2, -3, -2], [2, 3, -0.5])
        q = quat.from_euler(0.0, rng.uniform(-0.3, 0.3), rng.uniform(-0.5, 0.5))
        got = select_gates(p, q, CAM0, gmap)
        # brute-force re-evaluation of the rules
        cands = []
        for i, g in enumerate(gmap.gates):
            c_cam = CAM0.world_to_cam(p, q, g.center)
            if c_cam[2] <= 0.05:
                continue
            px, _ = CAM0.project(c_cam)
            if not CAM0.in_image(px):
                continue
            los = g.center - p
            x_g, _, _ = g.axes()
            ang = np.degrees(np.arccos(
                np.clip(abs(x_g @ los) / np.linalg.norm(los), -1, 1)))
            if ang > 65.0:
                continue
            cands.append((np.linalg.norm(los), i))
        cands.sort()
        assert got == [i for _, i in cands[:2]]


def test_crop_direct_when_corners_fit():
    pts = np.array([[400.0, 300.0], [500.0, 300.0], [500.0, 360.0], [400.0, 360.0]])
    win = crop(pts, "adaptive", CAM0)
    assert win.sx == 1.0 and win.sy == 1.0
    inside = win.contains(win.full_to_window(pts))
    assert inside.all()


def test_crop_resize_when_corners_spread():
    pts = np.array([[100.0, 100.0], [700.0, 100.0], [700.0, 500.0], [100.0, 500.0]])
    win = crop(pts, "adaptive", CAM0)
    assert win.sx < 1.0
    inside = win.contains(win.full_to_window(pts))
    assert inside.all()


def test_crop_center_fixed():
    for pts in (np.zeros((0, 2)), np.array([[10.0, 10.0]])):
        win = crop(pts, "center", CAM0)
        assert (win.x0, win.y0) == ((820 - 384) / 2.0, (616 - 384) / 2.0)
        assert win.sx == win.sy == 1.0


def test_crop_resized_fixed_ar_matches_511x384():
    win = crop(np.zeros((0, 2)), "resized_fixed_ar", CAM0)
    # scaling the full image by 384/616 gives 511x384; the 384-wide crop
    # covers 616 source columns starting at 102
    assert win.sy == pytest.approx(384 / 616)
    assert win.sx == pytest.approx(384 / 616)
    assert win.x0 == pytest.approx((820 - 616) / 2.0)
    assert round(820 * win.sx) == 511


def test_render_mask_area_oracle():
    d = 3.0
    gmap = facing_map(d)
    win = CropWindow(CAM0.cx - 192.0, CAM0.cy - 192.0, 1.0, 1.0)
    mask = render_mask(np.zeros(3), quat.identity(), CAM0, gmap, win)
    area = np.count_nonzero(mask)
    expected = CAM0.fx * CAM0.fy * (2.7**2 - 1.5**2) / d**2
    assert area == pytest.approx(expected, rel=0.05)


def test_render_mask_empty_when_no_gate():
    g = Gate(np.array([-5.0, 0.0, 0.0]), 0.0)
    gmap = GateMap([g], bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))
    win = CropWindow(0.0, 0.0, 1.0, 1.0)
    mask = render_mask(np.zeros(3), quat.identity(), CAM0, gmap, win)
    assert mask.sum() == 0


def test_render_mask_deterministic_and_iou_self():
    gmap = facing_map(3.5)
    win = CropWindow(100.0, 80.0, 1.0, 1.0)
    a = render_mask(np.zeros(3), quat.identity(), CAM0, gmap, win)
    b = render_mask(np.zeros(3), quat.identity(), CAM0, gmap, win)
    assert np.array_equal(a, b)
    assert iou(a, b) == 1.0


def test_render_mask_gate_ids():
    gates = [Gate(np.array([3.0, 0.0, 0.0]), np.pi),
             Gate(np.array([8.0, 1.0, 0.0]), np.pi)]
    gmap = GateMap(gates, bounds=np.array([[-50, 50], [-50, 50], [-50, 50.0]]))
    win = CropWindow(CAM0.cx - 192, CAM0.cy - 192, 1.0, 1.0)
    mask, ids = render_mask(np.zeros(3), quat.identity(), CAM0, gmap, win,
                            gate_ids=True)
    assert set(np.unique(ids)) <= {0, 1, 2}
    assert np.all((ids > 0) == (mask > 0))


def test_iou_properties():
    a = np.zeros((10, 10), dtype=np.uint8)
    b = np.zeros((10, 10), dtype=np.uint8)
    a[2:5, 2:5] = 1
    assert np.isnan(iou(b, b))
    assert iou(a, a) == 1.0
    b[7:9, 7:9] = 1
    assert iou(a, b) == 0.0
    assert iou(a, b) == iou(b, a)


def test_corrupt_identity_at_zero_severity():
    gmap = facing_map(3.0)
    win = CropWindow(CAM0.cx - 192, CAM0.cy - 192, 1.0, 1.0)
    mask = render_mask(np.zeros(3), quat.identity(), CAM0, gmap, win)
    out, flag = corrupt(mask, 0.0, np.random.default_rng(0))
    assert not flag and out is mask


def test_corrupt_rate_over_sequence():
    rng = np.random.default_rng(123)
    mask = np.zeros((64, 64), dtype=np.uint8)
    hits = sum(corrupt(mask, 0.5, rng)[1] for _ in range(1000))
    assert 450 <= hits <= 550  # binomial(1000, 0.5) within ~3 sigma


def test_corrupt_deterministic_per_seed():
    gmap = facing_map(3.0)
    win = CropWindow(CAM0.cx - 192, CAM0.cy - 192, 1.0, 1.0)
    mask = render_mask(np.zeros(3), quat.identity(), CAM0, gmap, win)
    a, fa = corrupt(mask, 1.0, np.random.default_rng(7))
    b, fb = corrupt(mask, 1.0, np.random.default_rng(7))
    assert fa and fb and np.array_equal(a, b)
    assert not np.array_equal(a, mask)


def test_mount_pitch_tilts_axis_up():
    cam = CameraModel(mount_pitch_deg=45.0)
    axis = cam.optical_axis_world(quat.identity())
    np.testing.assert_allclose(axis, [np.cos(np.pi / 4), 0.0, -np.sin(np.pi / 4)],
                               atol=1e-12)


def test_window_roundtrip():
    win = CropWindow(102.0, 0.0, 0.62, 0.62)
    px = np.array([[400.0, 300.0], [0.0, 0.0]])
    np.testing.assert_allclose(win.window_to_full(win.full_to_window(px)), px,
                               atol=1e-12)
