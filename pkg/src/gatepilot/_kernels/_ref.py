"""Pure-numpy reference implementations of the hot kernels.

Everything here is vectorized where it pays off but stays plain Python
otherwise; the compiled core in ``_core.pyx`` mirrors the exact same
arithmetic (same operation order per element) so both backends agree to
floating-point roundoff.
"""

import numpy as np

GRAVITY = 9.81


def quad_step_batch(states, commands, params, dt):
    """One forward-Euler step of the quadrotor model over a batch.

    states:   (n, 17) [p(3), v(3), q(4), Omega(3), omega(4)]
    commands: (n, 4) throttle commands, clamped here to [0, 1]
    params:   (n, 31) flattened ModelParams rows (see params.PARAM_ORDER)
    returns:  (n, 17) next states, quaternion renormalized, motor speeds
              clamped to [omega_min, omega_max]

    Derivatives are all evaluated at the incoming state (forces, moments,
    kinematics, motor lag) and applied in one Euler update.
    """
    x = np.asarray(states, dtype=np.float64)
    u = np.clip(np.asarray(commands, dtype=np.float64), 0.0, 1.0)
    p = np.asarray(params, dtype=np.float64)

    pos, vel, q = x[:, 0:3], x[:, 3:6], x[:, 6:10]
    rates, omega = x[:, 10:13], x[:, 13:17]

    k_omega, k_x, k_y = p[:, 0], p[:, 1], p[:, 2]
    k_x2, k_y2, k_alpha, k_hor = p[:, 3], p[:, 4], p[:, 5], p[:, 6]
    k_p = p[:, 7:11]
    k_q = p[:, 11:15]
    k_r = p[:, 15:23]
    J_x, J_y, J_z = p[:, 23], p[:, 24], p[:, 25]
    omega_min, omega_max = p[:, 26], p[:, 27]
    k_curve, tau, r_prop = p[:, 28], p[:, 29], p[:, 30]

    # motor response
    span = (omega_max - omega_min)[:, None]
    omega_c = span * np.sqrt(k_curve[:, None] * u * u + (1.0 - k_curve[:, None]) * u)
    omega_c += omega_min[:, None]
    omega_dot = (omega_c - omega) / tau[:, None]

    # body-frame velocity and specific forces
    vb = _rotate_inv(q, vel)
    wbar = omega[:, 0] + omega[:, 1] + omega[:, 2] + omega[:, 3]
    safe = wbar > 0.0
    denom = np.where(safe, r_prop * wbar, 1.0)
    alpha = np.where(safe, np.arctan(vb[:, 2] / denom), 0.0)
    mu = np.where(safe, np.arctan((vb[:, 0] ** 2 + vb[:, 1] ** 2) / denom), 0.0)
    w2 = omega * omega
    sum_w2 = w2[:, 0] + w2[:, 1] + w2[:, 2] + w2[:, 3]
    f_body = np.empty_like(vb)
    f_body[:, 0] = -k_x * vb[:, 0] * wbar - k_x2 * vb[:, 0] * np.abs(vb[:, 0])
    f_body[:, 1] = -k_y * vb[:, 1] * wbar - k_y2 * vb[:, 1] * np.abs(vb[:, 1])
    f_body[:, 2] = -k_omega * (1.0 + k_alpha * alpha + k_hor * mu) * sum_w2
    acc = _rotate(q, f_body)
    acc[:, 2] += GRAVITY

    # angular accelerations (squared-speed mixing + gyroscopic coupling)
    pr, qr, rr = rates[:, 0], rates[:, 1], rates[:, 2]
    m_x = (-k_p[:, 0] * w2[:, 0] - k_p[:, 1] * w2[:, 1]
           + k_p[:, 2] * w2[:, 2] + k_p[:, 3] * w2[:, 3] + J_x * qr * rr)
    m_y = (-k_q[:, 0] * w2[:, 0] + k_q[:, 1] * w2[:, 1]
           - k_q[:, 2] * w2[:, 2] + k_q[:, 3] * w2[:, 3] + J_y * pr * rr)
    m_z = (-k_r[:, 0] * omega[:, 0] + k_r[:, 1] * omega[:, 1]
           + k_r[:, 2] * omega[:, 2] - k_r[:, 3] * omega[:, 3]
           - k_r[:, 4] * omega_dot[:, 0] + k_r[:, 5] * omega_dot[:, 1]
           + k_r[:, 6] * omega_dot[:, 2] - k_r[:, 7] * omega_dot[:, 3]
           + J_z * pr * qr)

    # quaternion derivative 0.5 * q x (0, Omega)
    qw, qx, qy, qz = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    dqw = 0.5 * (-qx * pr - qy * qr - qz * rr)
    dqx = 0.5 * (qw * pr + qy * rr - qz * qr)
    dqy = 0.5 * (qw * qr - qx * rr + qz * pr)
    dqz = 0.5 * (qw * rr + qx * qr - qy * pr)

    out = np.empty_like(x)
    out[:, 0:3] = pos + vel * dt
    out[:, 3:6] = vel + acc * dt
    out[:, 6] = qw + dqw * dt
    out[:, 7] = qx + dqx * dt
    out[:, 8] = qy + dqy * dt
    out[:, 9] = qz + dqz * dt
    norm = np.sqrt(out[:, 6] ** 2 + out[:, 7] ** 2 + out[:, 8] ** 2 + out[:, 9] ** 2)
    out[:, 6:10] /= norm[:, None]
    out[:, 10] = pr + m_x * dt
    out[:, 11] = qr + m_y * dt
    out[:, 12] = rr + m_z * dt
    out[:, 13:17] = np.clip(omega + omega_dot * dt,
                            omega_min[:, None], omega_max[:, None])
    return out


def _rotate(q, v):
    qv = q[:, 1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[:, :1] * t + np.cross(qv, t)


def _rotate_inv(q, v):
    qv = -q[:, 1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[:, :1] * t + np.cross(qv, t)


def ekf_predict(x, cov, u, dt, noise_diag):
    """One EKF time update.

    x:          (16,) [p, v, q, accel bias, gyro bias]
    cov:        (16, 16)
    u:          (6,) IMU input [accel(3), gyro(3)], body frame
    noise_diag: (12,) continuous noise densities
                [accel(3), gyro(3), accel-bias walk(3), gyro-bias walk(3)]
    returns:    (x_next, cov_next); quaternion renormalized, covariance
                symmetrized.
    """
    from ..ekf import ekf_jacobians, ekf_propagate

    f, l = ekf_jacobians(x, u, dt)
    x2 = ekf_propagate(x, u, dt)
    q_disc = np.asarray(noise_diag, dtype=np.float64) / dt
    cov2 = f @ cov @ f.T + (l * q_disc) @ l.T
    cov2 = 0.5 * (cov2 + cov2.T)
    return x2, cov2


def fill_convex_poly(mask, xs, ys, value):
    """Fill a convex polygon into ``mask`` (uint8, in place).

    A pixel is set when its center (integer coordinates) lies inside the
    polygon.  Rows are spanned by intersecting every edge with the row
    line using the half-open rule min(y) <= r < max(y).
    """
    h, w = mask.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n = len(xs)
    if n < 3:
        return
    r_lo = max(0, int(np.ceil(ys.min())))
    r_hi = min(h - 1, int(np.floor(ys.max())))
    if r_hi < r_lo:
        return
    rows = np.arange(r_lo, r_hi + 1, dtype=np.float64)

    x1, y1 = xs, ys
    x2, y2 = np.roll(xs, -1), np.roll(ys, -1)
    ylo = np.minimum(y1, y2)
    yhi = np.maximum(y1, y2)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = (x2 - x1) / (y2 - y1)
    hit = (rows[:, None] >= ylo[None, :]) & (rows[:, None] < yhi[None, :])
    xi = x1[None, :] + (rows[:, None] - y1[None, :]) * slope[None, :]
    xi_lo = np.where(hit, xi, np.inf).min(axis=1)
    xi_hi = np.where(hit, xi, -np.inf).max(axis=1)

    ok = np.isfinite(xi_lo) & np.isfinite(xi_hi)
    c_lo = np.maximum(np.ceil(np.where(ok, xi_lo, 0.0)), 0.0).astype(np.int64)
    c_hi = np.minimum(np.floor(np.where(ok, xi_hi, -1.0)), w - 1.0).astype(np.int64)
    ok &= c_hi >= c_lo
    cols = np.arange(w)
    span = ok[:, None] & (cols[None, :] >= c_lo[:, None]) & (cols[None, :] <= c_hi[:, None])
    mask[r_lo:r_hi + 1][span] = value


# Walk directions: 0 = +x, 1 = +y, 2 = -x, 3 = -y (image x right, y down).
_DX = (1, 0, -1, 0)
_DY = (0, 1, 0, -1)


def trace_contours(mask):
    """Crack-boundary loops of a binary mask.

    Returns a list of (m, 2) float arrays of (x, y) vertices at
    half-integer pixel-corner positions.  Loops are walked with the
    foreground on the right of the travel direction (clockwise in image
    coordinates for outer boundaries); diagonal foreground pixels are
    treated as disconnected.  Loop order and start vertices are fixed by
    a raster scan, so the output is fully deterministic.
    """
    m = np.asarray(mask)
    h, w = m.shape
    pad = np.zeros((h + 2, w + 2), dtype=np.uint8)
    pad[1:-1, 1:-1] = m != 0

    # horizontal cracks: diff[i, j] compares padded rows i (above) and i+1
    diff = pad[1:, :].astype(np.int8) - pad[:-1, :].astype(np.int8)
    starts = np.argwhere(diff != 0)
    # visited_h[vi, vj]: crack between vertices (vi, vj) and (vi, vj+1)
    # visited_v[vi, vj]: crack between vertices (vi, vj) and (vi+1, vj)
    visited_h = np.zeros((pad.shape[0] + 1, pad.shape[1]), dtype=bool)
    visited_v = np.zeros((pad.shape[0], pad.shape[1] + 1), dtype=bool)

    loops = []
    for i, j in starts:
        if visited_h[i + 1, j]:
            continue
        if diff[i, j] > 0:       # foreground below: walk east
            loops.append(_walk(pad, visited_h, visited_v,
                               int(i) + 1, int(j), 0))
        else:                    # foreground above: walk west from east end
            loops.append(_walk(pad, visited_h, visited_v,
                               int(i) + 1, int(j) + 1, 2))
    return loops


def _crack_ok(pad, vi, vj, d):
    """Is a crack leaving vertex (vi, vj) in direction d a boundary crack
    with foreground on the right?  Vertex (vi, vj) sits at the corner
    between padded pixels (vi-1..vi, vj-1..vj)."""
    if d == 0:    # +x: below pad[vi, vj], above pad[vi-1, vj]
        return pad[vi, vj] == 1 and pad[vi - 1, vj] == 0
    if d == 2:    # -x: above pad[vi-1, vj-1], below pad[vi, vj-1]
        return pad[vi - 1, vj - 1] == 1 and pad[vi, vj - 1] == 0
    if d == 1:    # +y: west pad[vi, vj-1], east pad[vi, vj]
        return pad[vi, vj - 1] == 1 and pad[vi, vj] == 0
    # d == 3, -y: east pad[vi-1, vj], west pad[vi-1, vj-1]
    return pad[vi - 1, vj] == 1 and pad[vi - 1, vj - 1] == 0


def _mark(visited_h, visited_v, vi, vj, d):
    if d == 0:
        visited_h[vi, vj] = True
    elif d == 2:
        visited_h[vi, vj - 1] = True
    elif d == 1:
        visited_v[vi, vj] = True
    else:
        visited_v[vi - 1, vj] = True


def _walk(pad, visited_h, visited_v, i0, j0, d0):
    verts = [(j0 - 1.5, i0 - 1.5)]
    vi, vj, d = i0, j0, d0
    while True:
        _mark(visited_h, visited_v, vi, vj, d)
        vi += _DY[d]
        vj += _DX[d]
        verts.append((vj - 1.5, vi - 1.5))
        # right turn first keeps the foreground hugged on the right and
        # splits regions that only touch diagonally
        for turn in (1, 0, 3):
            nd = (d + turn) % 4
            if _crack_ok(pad, vi, vj, nd):
                d = nd
                break
        else:
            raise RuntimeError("contour walk stuck; mask not binary?")
        if vi == i0 and vj == j0 and d == d0:
            break
    return np.array(verts, dtype=np.float64)


def rotate_mask_nn(src, angle, cx, cy):
    """Rotate a uint8 mask by ``angle`` (radians, +x toward +y) about
    (cx, cy) with nearest-neighbor sampling; out-of-range reads are 0."""
    h, w = src.shape
    c, s = np.cos(angle), np.sin(angle)
    xs = np.arange(w, dtype=np.float64)[None, :] - cx
    ys = np.arange(h, dtype=np.float64)[:, None] - cy
    # inverse map: source = R(-angle) @ dest
    sx = np.floor(c * xs + s * ys + cx + 0.5).astype(np.int64)
    sy = np.floor(-s * xs + c * ys + cy + 0.5).astype(np.int64)
    ok = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.zeros_like(src)
    out[ok] = src[sy[ok], sx[ok]]
    return out
