"""Perspective-n-point pose estimation over one or two gates.

All 2D-3D correspondences from a frame, possibly spanning two gates at
different depths, enter a single least-squares problem: minimize total
squared reprojection error over the camera pose via Levenberg-Marquardt
with local rotation updates.  The iteration is seeded by the estimator
prior when available, otherwise by a direct linear transform (6+
points) or a plane homography (4+ coplanar points of one gate).

Position is taken from the full solution only when the primary gate is
between 2 m and 5 m away and at least six corners were found; otherwise
the de-rotated fallback combines the PnP gate-relative translation with
the filter attitude, which is far better conditioned at long range.
Attitude measurements are accepted in exactly three cases: the 2-5 m
window with more than six corners, two gates in view, or a stationary
vehicle.
"""

from dataclasses import dataclass

import numpy as np

from . import quat
from .camera import CameraModel
from .track import GateMap
from .vision import gate_corners_3d

FULL_PNP_RANGE = (2.0, 5.0)
FULL_PNP_MIN_CORNERS = 6
POS_VAR_COEFF = 0.02
QUAT_VAR_COEFF = 0.01


@dataclass
class Correspondence:
    gate_idx: int
    corner_idx: int           # 0-3 inner, 4-7 outer
    px: np.ndarray            # full-image pixels


@dataclass
class PnpSolution:
    p: np.ndarray             # body/camera position, world
    q: np.ndarray             # body attitude quaternion
    rms_px: float
    converged: bool
    n_points: int


@dataclass
class PnpMeasurement:
    position: np.ndarray
    quaternion: np.ndarray    # body attitude from the full solution
    d_gate: float
    n_corners: int
    n_gates: int
    mode: str                 # "full_pnp" | "derotated"
    timestamp: float
    rms_px: float = 0.0

    @property
    def sigma2_pos(self) -> float:
        return POS_VAR_COEFF * self.d_gate**2 / (self.n_corners**2 * self.n_gates)

    @property
    def sigma2_quat(self) -> float:
        return QUAT_VAR_COEFF * self.d_gate**2 / (self.n_corners**2 * self.n_gates)


def object_points(corrs, gmap: GateMap) -> np.ndarray:
    pts = []
    for c in corrs:
        pts.append(gate_corners_3d(gmap.gates[c.gate_idx])[c.corner_idx])
    return np.array(pts)


def _exp_so3(w):
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3) + _skew(w)
    a = w / theta
    k = _skew(a)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def _skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _normalized(px, cam):
    """Pixels -> normalized camera coordinates (x/z, y/z)."""
    px = np.asarray(px, dtype=np.float64)
    return np.stack([(px[..., 0] - cam.cx) / cam.fx,
                     (px[..., 1] - cam.cy) / cam.fy], axis=-1)


def _residuals(r_cw, c_pos, obj, img_n):
    pc = (obj - c_pos) @ r_cw.T
    z = pc[:, 2]
    bad = z <= 1e-6
    z = np.where(bad, 1.0, z)
    res = np.stack([pc[:, 0] / z, pc[:, 1] / z], axis=1) - img_n
    res[bad] = 10.0  # behind-camera points dominate the cost
    return res.ravel()


def _jacobian(r_cw, c_pos, obj):
    """Analytic residual Jacobian wrt (rotation increment, camera center).

    Rotation updates are local: R <- exp([delta]x) R, so the derivative
    of the camera-frame point is -[pc]x; the center derivative is -R.
    """
    pc = (obj - c_pos) @ r_cw.T
    n = len(obj)
    jac = np.zeros((2 * n, 6))
    for i in range(n):
        x, y, z = pc[i]
        if z <= 1e-6:
            continue  # behind-camera residual is constant
        a = np.array([[1.0 / z, 0.0, -x / z**2],
                      [0.0, 1.0 / z, -y / z**2]])
        jac[2 * i:2 * i + 2, :3] = a @ (-_skew(pc[i]))
        jac[2 * i:2 * i + 2, 3:] = a @ (-r_cw)
    return jac


def _dlt(obj, img_n):
    """Direct linear transform for 6+ general points."""
    n = len(obj)
    a = np.zeros((2 * n, 12))
    for i in range(n):
        x, y, z = obj[i]
        u, v = img_n[i]
        a[2 * i, 0:4] = [x, y, z, 1.0]
        a[2 * i, 8:12] = [-u * x, -u * y, -u * z, -u]
        a[2 * i + 1, 4:8] = [x, y, z, 1.0]
        a[2 * i + 1, 8:12] = [-v * x, -v * y, -v * z, -v]
    _, _, vt = np.linalg.svd(a)
    p = vt[-1].reshape(3, 4)
    m = p[:, :3]
    # m ~ k R with det(m) = k^3: the sign of det(m) fixes the projective
    # scale, after which the nearest rotation and t = p4 / k follow
    u_svd, s, vt2 = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u_svd @ vt2))
    r = u_svd @ np.diag([1.0, 1.0, d]) @ vt2
    k = np.sign(np.linalg.det(m)) * s.mean()
    if abs(k) < 1e-12:
        raise np.linalg.LinAlgError("degenerate DLT")
    t = p[:, 3] / k
    c_pos = -r.T @ t
    return r, c_pos


def _homography_seed(corrs, gmap, img_n):
    """Pose from one gate's coplanar corners (4+ points)."""
    from collections import Counter

    counts = Counter(c.gate_idx for c in corrs)
    gate_idx, n = counts.most_common(1)[0]
    if n < 4:
        return None
    g = gmap.gates[gate_idx]
    x_g, y_g, z_g = g.axes()
    sel = [i for i, c in enumerate(corrs) if c.gate_idx == gate_idx]
    plane_pts = []
    for i in sel:
        w = object_points([corrs[i]], gmap)[0] - g.center
        plane_pts.append([w @ y_g, w @ z_g])
    plane_pts = np.array(plane_pts)
    uv = img_n[sel]
    a = np.zeros((2 * len(sel), 9))
    for i, ((py, pz), (u, v)) in enumerate(zip(plane_pts, uv)):
        a[2 * i, 0:3] = [py, pz, 1.0]
        a[2 * i, 6:9] = [-u * py, -u * pz, -u]
        a[2 * i + 1, 3:6] = [py, pz, 1.0]
        a[2 * i + 1, 6:9] = [-v * py, -v * pz, -v]
    _, _, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    l1 = np.linalg.norm(h[:, 0])
    l2 = np.linalg.norm(h[:, 1])
    lam = 0.5 * (l1 + l2)
    if lam < 1e-12:
        return None
    best = None
    for sign in (1.0, -1.0):
        hh = sign * h / lam
        r1, r2, t = hh[:, 0], hh[:, 1], hh[:, 2]
        m = np.stack([r1, r2, np.cross(r1, r2)], axis=1)
        u_svd, _, vt2 = np.linalg.svd(m)
        rc = u_svd @ np.diag([1, 1, np.sign(np.linalg.det(u_svd @ vt2))]) @ vt2
        # camera rotation: columns are images of (y_g, z_g, x_g)
        r_cw = rc @ np.stack([y_g, z_g, x_g], axis=0)
        c_pos = g.center - r_cw.T @ t
        pc = (object_points([corrs[i] for i in sel], gmap) - c_pos) @ r_cw.T
        if np.all(pc[:, 2] > 0):
            res = _residuals(r_cw, c_pos, object_points(corrs, gmap), img_n)
            cost = float(res @ res)
            if best is None or cost < best[0]:
                best = (cost, r_cw, c_pos)
    if best is None:
        return None
    return best[1], best[2]


def solve_pnp(corrs, cam: CameraModel, gmap: GateMap, seed_pose=None,
              max_iter: int = 60, tol: float = 1e-26):
    """Minimize total squared reprojection error over the body pose.

    ``corrs``: list of Correspondence (may span several gates; at least
    4 required).  ``seed_pose``: optional (p, q_body) prior.  Returns a
    PnpSolution or None (too few points, no usable seed, or divergence).
    """
    if len(corrs) < 4:
        return None
    obj = object_points(corrs, gmap)
    img_n = _normalized(np.array([c.px for c in corrs]), cam)
    r_bc = cam.r_cam_to_body()

    if seed_pose is not None:
        p0, q0 = seed_pose
        r_cw = (quat.to_matrix(q0) @ r_bc).T
        c_pos = np.asarray(p0, dtype=np.float64).copy()
    else:
        # score every seed the geometry allows; the DLT degenerates for
        # coplanar (single-gate) point sets, the homography wins there
        seeds = []
        seed_h = _homography_seed(corrs, gmap, img_n)
        if seed_h is not None:
            seeds.append(seed_h)
        if len(corrs) >= 6:
            try:
                r, c0 = _dlt(obj, img_n)
                if np.all(np.isfinite(c0)):
                    seeds.append((r, c0))
            except np.linalg.LinAlgError:
                pass
        if not seeds:
            return None
        costs = [float(np.sum(_residuals(r, c, obj, img_n) ** 2))
                 for r, c in seeds]
        r_cw, c_pos = seeds[int(np.argmin(costs))]

    lam = 1e-3
    res = _residuals(r_cw, c_pos, obj, img_n)
    cost = float(res @ res)
    converged = False
    for _ in range(max_iter):
        jac = _jacobian(r_cw, c_pos, obj)
        jtj = jac.T @ jac
        jtr = jac.T @ res
        step_ok = False
        for _ in range(12):
            try:
                delta = np.linalg.solve(jtj + lam * np.eye(6), -jtr)
            except np.linalg.LinAlgError:
                break
            r_new = _exp_so3(delta[:3]) @ r_cw
            c_new = c_pos + delta[3:]
            res_new = _residuals(r_new, c_new, obj, img_n)
            cost_new = float(res_new @ res_new)
            if cost_new < cost:
                r_cw, c_pos, res, cost = r_new, c_new, res_new, cost_new
                lam = max(lam * 0.3, 1e-12)
                step_ok = True
                break
            lam *= 5.0
        if not step_ok:
            converged = cost < 1e3
            break
        if np.linalg.norm(delta) < 1e-12 or cost < tol:
            converged = True
            break
    else:
        converged = True  # hit the iteration cap with monotone progress

    if not np.all(np.isfinite(c_pos)) or not converged:
        return None
    r_wb = r_cw.T @ r_bc.T
    q_body = _quat_from_matrix(r_wb)
    rms = np.sqrt(cost / len(corrs))
    # rms in normalized coords -> pixels (geometric mean focal)
    rms_px = float(rms * np.sqrt(cam.fx * cam.fy))
    return PnpSolution(p=c_pos, q=q_body, rms_px=rms_px, converged=True,
                       n_points=len(corrs))


def _quat_from_matrix(r):
    w = np.sqrt(max(0.0, 1.0 + r[0, 0] + r[1, 1] + r[2, 2])) / 2.0
    if w > 1e-6:
        x = (r[2, 1] - r[1, 2]) / (4 * w)
        y = (r[0, 2] - r[2, 0]) / (4 * w)
        z = (r[1, 0] - r[0, 1]) / (4 * w)
    else:
        # fallback via the largest diagonal element
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1e-12, 1.0 + r[i, i] - r[j, j] - r[k, k])) * 2.0
        vals = [0.0, 0.0, 0.0]
        vals[i] = s / 4.0
        vals[j] = (r[j, i] + r[i, j]) / s
        vals[k] = (r[k, i] + r[i, k]) / s
        w = (r[k, j] - r[j, k]) / s
        x, y, z = vals
    return quat.normalize(np.array([w, x, y, z]))


def derotated_position(rel_cam, q_ekf, gate, cam: CameraModel) -> np.ndarray:
    """World position from the PnP gate-relative translation and the
    filter attitude.

    ``rel_cam``: gate center in camera coordinates per the PnP solution.
    """
    r_wc = quat.to_matrix(q_ekf) @ cam.r_cam_to_body()
    return gate.center - r_wc @ rel_cam


def accept_attitude(meas: PnpMeasurement, stationary: bool) -> bool:
    """Is the attitude part of this measurement trustworthy?"""
    lo, hi = FULL_PNP_RANGE
    if lo <= meas.d_gate <= hi and meas.n_corners > FULL_PNP_MIN_CORNERS:
        return True
    if meas.n_gates >= 2:
        return True
    return bool(stationary)


def make_measurement(sol: PnpSolution, corrs, gmap: GateMap, cam: CameraModel,
                     q_ekf, timestamp: float) -> PnpMeasurement:
    """Assemble the filter measurement, choosing full or de-rotated mode.

    The primary gate is the one contributing the most corners (ties go
    to the nearest).  Full-PnP position requires the 2-5 m range and at
    least six corners; otherwise the de-rotated fallback is used.
    """
    from collections import Counter

    counts = Counter(c.gate_idx for c in corrs)
    top = max(counts.values())
    cands = [g for g, n in counts.items() if n == top]
    dists = {g: float(np.linalg.norm(gmap.gates[g].center - sol.p)) for g in cands}
    primary = min(cands, key=lambda g: dists[g])
    d_gate = dists[primary]

    n_c = len(corrs)
    n_g = len(counts)
    lo, hi = FULL_PNP_RANGE
    if lo <= d_gate <= hi and n_c >= FULL_PNP_MIN_CORNERS:
        mode = "full_pnp"
        position = sol.p.copy()
    else:
        mode = "derotated"
        g = gmap.gates[primary]
        r_wc = quat.to_matrix(sol.q) @ cam.r_cam_to_body()
        rel_cam = r_wc.T @ (g.center - sol.p)
        position = derotated_position(rel_cam, q_ekf, g, cam)
    return PnpMeasurement(
        position=position, quaternion=sol.q.copy(), d_gate=d_gate,
        n_corners=n_c, n_gates=n_g, mode=mode, timestamp=timestamp,
        rms_px=sol.rms_px,
    )
