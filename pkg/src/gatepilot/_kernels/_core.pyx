# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; mirrors _ref.py arithmetic operation for operation.

The polygon fill, contour tracer and mask rotation are exact twins of
the reference (integer/comparison logic), so outputs are bit-identical;
the floating-point kernels agree to roundoff (summation order in the
matrix products differs from BLAS).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan, cos, fabs, floor, sin, sqrt

cnp.import_array()

DEF GRAVITY = 9.81


def quad_step_batch(states, commands, params, double dt):
    x_arr = np.ascontiguousarray(states, dtype=np.float64)
    u_arr = np.ascontiguousarray(commands, dtype=np.float64)
    p_arr = np.ascontiguousarray(params, dtype=np.float64)
    out_arr = np.empty_like(x_arr)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] p = p_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n = x.shape[0], i, k
    cdef double k_omega, k_x, k_y, k_x2, k_y2, k_alpha, k_hor
    cdef double j_x, j_y, j_z, omega_min, omega_max, k_curve, tau, r_prop
    cdef double qw, qx, qy, qz, pr, qr, rr
    cdef double uw, span, wbar, denom, alpha, mu, sum_w2
    cdef double vx, vy, vz, vbx, vby, vbz
    cdef double fx, fy, fz, ax, ay, az
    cdef double m_x, m_y, m_z, dqw, dqx, dqy, dqz, norm
    cdef double tx, ty, tz
    cdef double omega[4]
    cdef double omega_c[4]
    cdef double omega_dot[4]
    cdef double w2[4]
    cdef double uc[4]

    for i in range(n):
        k_omega = p[i, 0]; k_x = p[i, 1]; k_y = p[i, 2]
        k_x2 = p[i, 3]; k_y2 = p[i, 4]; k_alpha = p[i, 5]; k_hor = p[i, 6]
        j_x = p[i, 23]; j_y = p[i, 24]; j_z = p[i, 25]
        omega_min = p[i, 26]; omega_max = p[i, 27]
        k_curve = p[i, 28]; tau = p[i, 29]; r_prop = p[i, 30]
        span = omega_max - omega_min

        for k in range(4):
            uw = u[i, k]
            if uw < 0.0:
                uw = 0.0
            elif uw > 1.0:
                uw = 1.0
            uc[k] = uw
            omega[k] = x[i, 13 + k]
            omega_c[k] = span * sqrt(k_curve * uw * uw + (1.0 - k_curve) * uw) + omega_min
            omega_dot[k] = (omega_c[k] - omega[k]) / tau
            w2[k] = omega[k] * omega[k]

        vx = x[i, 3]; vy = x[i, 4]; vz = x[i, 5]
        qw = x[i, 6]; qx = x[i, 7]; qy = x[i, 8]; qz = x[i, 9]
        pr = x[i, 10]; qr = x[i, 11]; rr = x[i, 12]

        # body velocity: R(q)^T v via the conjugate two-cross rotation
        tx = 2.0 * (-qy * vz - -qz * vy)
        ty = 2.0 * (-qz * vx - -qx * vz)
        tz = 2.0 * (-qx * vy - -qy * vx)
        vbx = vx + qw * tx + (-qy * tz - -qz * ty)
        vby = vy + qw * ty + (-qz * tx - -qx * tz)
        vbz = vz + qw * tz + (-qx * ty - -qy * tx)

        wbar = omega[0] + omega[1] + omega[2] + omega[3]
        if wbar > 0.0:
            denom = r_prop * wbar
            alpha = atan(vbz / denom)
            mu = atan((vbx * vbx + vby * vby) / denom)
        else:
            alpha = 0.0
            mu = 0.0
        sum_w2 = w2[0] + w2[1] + w2[2] + w2[3]
        fx = -k_x * vbx * wbar - k_x2 * vbx * fabs(vbx)
        fy = -k_y * vby * wbar - k_y2 * vby * fabs(vby)
        fz = -k_omega * (1.0 + k_alpha * alpha + k_hor * mu) * sum_w2

        # world acceleration: R(q) f + g
        tx = 2.0 * (qy * fz - qz * fy)
        ty = 2.0 * (qz * fx - qx * fz)
        tz = 2.0 * (qx * fy - qy * fx)
        ax = fx + qw * tx + (qy * tz - qz * ty)
        ay = fy + qw * ty + (qz * tx - qx * tz)
        az = fz + qw * tz + (qx * ty - qy * tx) + GRAVITY

        m_x = (-p[i, 7] * w2[0] - p[i, 8] * w2[1]
               + p[i, 9] * w2[2] + p[i, 10] * w2[3] + j_x * qr * rr)
        m_y = (-p[i, 11] * w2[0] + p[i, 12] * w2[1]
               - p[i, 13] * w2[2] + p[i, 14] * w2[3] + j_y * pr * rr)
        m_z = (-p[i, 15] * omega[0] + p[i, 16] * omega[1]
               + p[i, 17] * omega[2] - p[i, 18] * omega[3]
               - p[i, 19] * omega_dot[0] + p[i, 20] * omega_dot[1]
               + p[i, 21] * omega_dot[2] - p[i, 22] * omega_dot[3]
               + j_z * pr * qr)

        dqw = 0.5 * (-qx * pr - qy * qr - qz * rr)
        dqx = 0.5 * (qw * pr + qy * rr - qz * qr)
        dqy = 0.5 * (qw * qr - qx * rr + qz * pr)
        dqz = 0.5 * (qw * rr + qx * qr - qy * pr)

        out[i, 0] = x[i, 0] + vx * dt
        out[i, 1] = x[i, 1] + vy * dt
        out[i, 2] = x[i, 2] + vz * dt
        out[i, 3] = vx + ax * dt
        out[i, 4] = vy + ay * dt
        out[i, 5] = vz + az * dt
        out[i, 6] = qw + dqw * dt
        out[i, 7] = qx + dqx * dt
        out[i, 8] = qy + dqy * dt
        out[i, 9] = qz + dqz * dt
        norm = sqrt(out[i, 6] * out[i, 6] + out[i, 7] * out[i, 7]
                    + out[i, 8] * out[i, 8] + out[i, 9] * out[i, 9])
        out[i, 6] /= norm
        out[i, 7] /= norm
        out[i, 8] /= norm
        out[i, 9] /= norm
        out[i, 10] = pr + m_x * dt
        out[i, 11] = qr + m_y * dt
        out[i, 12] = rr + m_z * dt
        for k in range(4):
            uw = omega[k] + omega_dot[k] * dt
            if uw < omega_min:
                uw = omega_min
            elif uw > omega_max:
                uw = omega_max
            out[i, 13 + k] = uw
    return out_arr


def ekf_predict(x_in, cov_in, u_in, double dt, noise_diag):
    x_arr = np.ascontiguousarray(x_in, dtype=np.float64)
    p_arr = np.ascontiguousarray(cov_in, dtype=np.float64)
    u_arr = np.ascontiguousarray(u_in, dtype=np.float64)
    q_arr = np.ascontiguousarray(noise_diag, dtype=np.float64)
    x2_arr = np.empty(16, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] u = u_arr
    cdef double[::1] qd = q_arr
    cdef double[:, ::1] p = p_arr
    cdef double[::1] x2 = x2_arr

    cdef double qw = x[6], qx = x[7], qy = x[8], qz = x[9]
    cdef double abx = u[0] - x[10], aby = u[1] - x[11], abz = u[2] - x[12]
    cdef double wbx = u[3] - x[13], wby = u[4] - x[14], wbz = u[5] - x[15]
    cdef double tx, ty, tz, i_, j_
    cdef Py_ssize_t i, j, k

    # rotation matrix (unit-quaternion form; state q is renormalized by
    # the caller after every step)
    cdef double r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
    cdef double r01 = 2.0 * (qx * qy - qw * qz)
    cdef double r02 = 2.0 * (qx * qz + qw * qy)
    cdef double r10 = 2.0 * (qx * qy + qw * qz)
    cdef double r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
    cdef double r12 = 2.0 * (qy * qz - qw * qx)
    cdef double r20 = 2.0 * (qx * qz - qw * qy)
    cdef double r21 = 2.0 * (qy * qz + qw * qx)
    cdef double r22 = 1.0 - 2.0 * (qx * qx + qy * qy)

    # state propagation (homogeneous polynomial rotation, as _rotate_poly)
    cdef double ww = qw * qw - (qx * qx + qy * qy + qz * qz)
    cdef double dotqa = qx * abx + qy * aby + qz * abz
    cdef double cxx = qy * abz - qz * aby
    cdef double cxy = qz * abx - qx * abz
    cdef double cxz = qx * aby - qy * abx
    cdef double avx = ww * abx + 2.0 * dotqa * qx + 2.0 * qw * cxx
    cdef double avy = ww * aby + 2.0 * dotqa * qy + 2.0 * qw * cxy
    cdef double avz = ww * abz + 2.0 * dotqa * qz + 2.0 * qw * cxz + GRAVITY

    x2[0] = x[0] + x[3] * dt
    x2[1] = x[1] + x[4] * dt
    x2[2] = x[2] + x[5] * dt
    x2[3] = x[3] + avx * dt
    x2[4] = x[4] + avy * dt
    x2[5] = x[5] + avz * dt
    x2[6] = x[6] + 0.5 * (-qx * wbx - qy * wby - qz * wbz) * dt
    x2[7] = x[7] + 0.5 * (qw * wbx + qy * wbz - qz * wby) * dt
    x2[8] = x[8] + 0.5 * (qw * wby - qx * wbz + qz * wbx) * dt
    x2[9] = x[9] + 0.5 * (qw * wbz + qx * wby - qy * wbx) * dt
    for i in range(10, 16):
        x2[i] = x[i]

    # F = I + A dt
    cdef double f[16][16]
    for i in range(16):
        for j in range(16):
            f[i][j] = 0.0
        f[i][i] = 1.0
    f[0][3] = dt
    f[1][4] = dt
    f[2][5] = dt
    # d(R(q) a)/dq (homogeneous form) * dt
    f[3][6] = 2.0 * (qw * abx + cxx) * dt
    f[4][6] = 2.0 * (qw * aby + cxy) * dt
    f[5][6] = 2.0 * (qw * abz + cxz) * dt
    # expanded: (qv.a) I + qv a^T - a qv^T - w [a]x, column by column
    f[3][7] = 2.0 * (dotqa + qx * abx - abx * qx) * dt
    f[3][8] = 2.0 * (qx * aby - abx * qy - qw * (-abz)) * dt
    f[3][9] = 2.0 * (qx * abz - abx * qz - qw * aby) * dt
    f[4][7] = 2.0 * (qy * abx - aby * qx - qw * abz) * dt
    f[4][8] = 2.0 * (dotqa + qy * aby - aby * qy) * dt
    f[4][9] = 2.0 * (qy * abz - aby * qz - qw * (-abx)) * dt
    f[5][7] = 2.0 * (qz * abx - abz * qx - qw * (-aby)) * dt
    f[5][8] = 2.0 * (qz * aby - abz * qy - qw * abx) * dt
    f[5][9] = 2.0 * (dotqa + qz * abz - abz * qz) * dt
    f[3][10] = -r00 * dt
    f[3][11] = -r01 * dt
    f[3][12] = -r02 * dt
    f[4][10] = -r10 * dt
    f[4][11] = -r11 * dt
    f[4][12] = -r12 * dt
    f[5][10] = -r20 * dt
    f[5][11] = -r21 * dt
    f[5][12] = -r22 * dt
    # attitude block: I + 0.5 dt RightMul((0, w))
    f[6][7] = -0.5 * dt * wbx
    f[6][8] = -0.5 * dt * wby
    f[6][9] = -0.5 * dt * wbz
    f[7][6] = 0.5 * dt * wbx
    f[7][8] = 0.5 * dt * wbz
    f[7][9] = -0.5 * dt * wby
    f[8][6] = 0.5 * dt * wby
    f[8][7] = -0.5 * dt * wbz
    f[8][9] = 0.5 * dt * wbx
    f[9][6] = 0.5 * dt * wbz
    f[9][7] = 0.5 * dt * wby
    f[9][8] = -0.5 * dt * wbx
    # attitude wrt gyro bias: -0.5 dt G(q)
    f[6][13] = 0.5 * dt * qx
    f[6][14] = 0.5 * dt * qy
    f[6][15] = 0.5 * dt * qz
    f[7][13] = -0.5 * dt * qw
    f[7][14] = 0.5 * dt * qz
    f[7][15] = -0.5 * dt * qy
    f[8][13] = -0.5 * dt * qz
    f[8][14] = -0.5 * dt * qw
    f[8][15] = 0.5 * dt * qx
    f[9][13] = 0.5 * dt * qy
    f[9][14] = -0.5 * dt * qx
    f[9][15] = -0.5 * dt * qw

    # T = F P, P2 = T F^T + L Q L^T
    cdef double t_[16][16]
    cdef double acc
    for i in range(16):
        for j in range(16):
            acc = 0.0
            for k in range(16):
                acc += f[i][k] * p[k, j]
            t_[i][j] = acc
    p2_arr = np.empty((16, 16), dtype=np.float64)
    cdef double[:, ::1] p2 = p2_arr
    for i in range(16):
        for j in range(16):
            acc = 0.0
            for k in range(16):
                acc += t_[i][k] * f[j][k]
            p2[i, j] = acc

    # process noise: q_disc = noise_diag / dt, injected through L
    cdef double dd = dt * dt
    cdef double qa0 = qd[0] / dt, qa1 = qd[1] / dt, qa2 = qd[2] / dt
    cdef double qg0 = qd[3] / dt, qg1 = qd[4] / dt, qg2 = qd[5] / dt
    # velocity block: R diag(qa) R^T dt^2
    p2[3, 3] += dd * (r00 * r00 * qa0 + r01 * r01 * qa1 + r02 * r02 * qa2)
    p2[3, 4] += dd * (r00 * r10 * qa0 + r01 * r11 * qa1 + r02 * r12 * qa2)
    p2[3, 5] += dd * (r00 * r20 * qa0 + r01 * r21 * qa1 + r02 * r22 * qa2)
    p2[4, 3] += dd * (r10 * r00 * qa0 + r11 * r01 * qa1 + r12 * r02 * qa2)
    p2[4, 4] += dd * (r10 * r10 * qa0 + r11 * r11 * qa1 + r12 * r12 * qa2)
    p2[4, 5] += dd * (r10 * r20 * qa0 + r11 * r21 * qa1 + r12 * r22 * qa2)
    p2[5, 3] += dd * (r20 * r00 * qa0 + r21 * r01 * qa1 + r22 * r02 * qa2)
    p2[5, 4] += dd * (r20 * r10 * qa0 + r21 * r11 * qa1 + r22 * r12 * qa2)
    p2[5, 5] += dd * (r20 * r20 * qa0 + r21 * r21 * qa1 + r22 * r22 * qa2)
    # attitude block: 0.25 dt^2 G diag(qg) G^T
    cdef double g_[4][3]
    g_[0][0] = -qx; g_[0][1] = -qy; g_[0][2] = -qz
    g_[1][0] = qw;  g_[1][1] = -qz; g_[1][2] = qy
    g_[2][0] = qz;  g_[2][1] = qw;  g_[2][2] = -qx
    g_[3][0] = -qy; g_[3][1] = qx;  g_[3][2] = qw
    cdef double qdd = 0.25 * dd
    for i in range(4):
        for j in range(4):
            p2[6 + i, 6 + j] += qdd * (g_[i][0] * g_[j][0] * qg0
                                       + g_[i][1] * g_[j][1] * qg1
                                       + g_[i][2] * g_[j][2] * qg2)
    for k in range(3):
        p2[10 + k, 10 + k] += dd * (qd[6 + k] / dt)
        p2[13 + k, 13 + k] += dd * (qd[9 + k] / dt)

    # symmetrize
    for i in range(16):
        for j in range(i + 1, 16):
            acc = 0.5 * (p2[i, j] + p2[j, i])
            p2[i, j] = acc
            p2[j, i] = acc
    return x2_arr, p2_arr


def fill_convex_poly(mask, xs, ys, int value):
    cdef cnp.uint8_t[:, ::1] m = mask
    x_arr = np.ascontiguousarray(xs, dtype=np.float64)
    y_arr = np.ascontiguousarray(ys, dtype=np.float64)
    cdef double[::1] px = x_arr
    cdef double[::1] py = y_arr
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1], n = px.shape[0]
    cdef Py_ssize_t i, j, r, c0, c1
    if n < 3:
        return
    cdef double ymin = py[0], ymax = py[0]
    for i in range(1, n):
        if py[i] < ymin:
            ymin = py[i]
        if py[i] > ymax:
            ymax = py[i]
    # ceil/floor match the numpy reference exactly
    cdef Py_ssize_t r_lo = <Py_ssize_t>(-floor(-ymin))
    cdef Py_ssize_t r_hi = <Py_ssize_t>floor(ymax)
    if r_lo < 0:
        r_lo = 0
    if r_hi > h - 1:
        r_hi = h - 1
    cdef double x1, y1, x2, y2, xi, lo, hi, slope
    cdef cnp.uint8_t val = <cnp.uint8_t>value
    for r in range(r_lo, r_hi + 1):
        lo = 1e300
        hi = -1e300
        for i in range(n):
            j = i + 1
            if j == n:
                j = 0
            x1 = px[i]; y1 = py[i]; x2 = px[j]; y2 = py[j]
            if y1 == y2:
                continue
            if (r >= y1 and r < y2) or (r >= y2 and r < y1):
                slope = (x2 - x1) / (y2 - y1)
                xi = x1 + (r - y1) * slope
                if xi < lo:
                    lo = xi
                if xi > hi:
                    hi = xi
        if lo > hi:
            continue
        c0 = <Py_ssize_t>(-floor(-lo))
        c1 = <Py_ssize_t>floor(hi)
        if c0 < 0:
            c0 = 0
        if c1 > w - 1:
            c1 = w - 1
        for i in range(c0, c1 + 1):
            m[r, i] = val


# crack-walk directions: 0=+x, 1=+y, 2=-x, 3=-y
cdef int _DX[4]
cdef int _DY[4]
_DX[0] = 1; _DX[1] = 0; _DX[2] = -1; _DX[3] = 0
_DY[0] = 0; _DY[1] = 1; _DY[2] = 0; _DY[3] = -1


cdef inline bint _crack_ok(cnp.uint8_t[:, ::1] pad, Py_ssize_t vi,
                           Py_ssize_t vj, int d) nogil:
    if d == 0:
        return pad[vi, vj] == 1 and pad[vi - 1, vj] == 0
    if d == 2:
        return pad[vi - 1, vj - 1] == 1 and pad[vi, vj - 1] == 0
    if d == 1:
        return pad[vi, vj - 1] == 1 and pad[vi, vj] == 0
    return pad[vi - 1, vj] == 1 and pad[vi - 1, vj - 1] == 0


def trace_contours(mask):
    m_arr = np.asarray(mask)
    cdef Py_ssize_t h = m_arr.shape[0], w = m_arr.shape[1]
    pad_arr = np.zeros((h + 2, w + 2), dtype=np.uint8)
    pad_arr[1:-1, 1:-1] = m_arr != 0
    cdef cnp.uint8_t[:, ::1] pad = pad_arr
    vh_arr = np.zeros((h + 3, w + 2), dtype=np.uint8)
    vv_arr = np.zeros((h + 2, w + 3), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] visited_h = vh_arr
    cdef cnp.uint8_t[:, ::1] visited_v = vv_arr

    cdef list loops = []
    cdef Py_ssize_t i, j, vi, vj, i0, j0
    cdef int d, d0, turn, nd, found
    cdef Py_ssize_t cap, cnt
    cdef double[:, ::1] verts
    for i in range(h + 1):
        for j in range(w + 2):
            if pad[i + 1, j] == pad[i, j]:
                continue
            if visited_h[i + 1, j]:
                continue
            if pad[i + 1, j] > pad[i, j]:
                i0 = i + 1
                j0 = j
                d0 = 0
            else:
                i0 = i + 1
                j0 = j + 1
                d0 = 2
            # walk one loop
            cap = 4 * (h + 2) * (w + 2) + 8
            out_arr = np.empty((cap, 2), dtype=np.float64)
            verts = out_arr
            verts[0, 0] = j0 - 1.5
            verts[0, 1] = i0 - 1.5
            cnt = 1
            vi = i0
            vj = j0
            d = d0
            while True:
                if d == 0:
                    visited_h[vi, vj] = 1
                elif d == 2:
                    visited_h[vi, vj - 1] = 1
                elif d == 1:
                    visited_v[vi, vj] = 1
                else:
                    visited_v[vi - 1, vj] = 1
                vi += _DY[d]
                vj += _DX[d]
                verts[cnt, 0] = vj - 1.5
                verts[cnt, 1] = vi - 1.5
                cnt += 1
                found = 0
                for turn in range(3):
                    nd = (d + (1 if turn == 0 else (0 if turn == 1 else 3))) % 4
                    if _crack_ok(pad, vi, vj, nd):
                        d = nd
                        found = 1
                        break
                if not found:
                    raise RuntimeError("contour walk stuck; mask not binary?")
                if vi == i0 and vj == j0 and d == d0:
                    break
            loops.append(out_arr[:cnt].copy())
    return loops


def rotate_mask_nn(src, double angle, double cx, double cy):
    s_arr = np.ascontiguousarray(src, dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] s = s_arr
    cdef Py_ssize_t h = s.shape[0], w = s.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out_arr
    cdef double c = cos(angle), si = sin(angle)
    cdef Py_ssize_t r, col, sx, sy
    cdef double xs, ys
    for r in range(h):
        ys = r - cy
        for col in range(w):
            xs = col - cx
            sx = <Py_ssize_t>floor(c * xs + si * ys + cx + 0.5)
            sy = <Py_ssize_t>floor(-si * xs + c * ys + cy + 0.5)
            if 0 <= sx < w and 0 <= sy < h:
                o[r, col] = s[sy, sx]
    return out_arr
