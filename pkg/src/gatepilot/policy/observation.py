"""Observation vector for the motor-command policy (24 entries).

All positional quantities are expressed in the frame of the current
target gate, so the policy is invariant to where the gate sits in the
world:

    [0:3]   position relative to the gate center, gate frame
    [3:6]   velocity, gate frame
    [6:9]   roll/pitch/yaw of the vehicle relative to the gate heading
    [9:12]  body rates rotated into the world frame
    [12:16] motor speeds normalized by omega_max
    [16:19] next gate center relative to the current gate, gate frame
    [19]    next gate heading relative to the current gate heading
    [20:24] previous motor command

The published component list sums to 20; the trailing previous-command
block is this implementation's completion to the stated 24 (it is also
what the command-change penalty needs).
"""

import numpy as np

from .. import quat

OBS_DIM = 24


def wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def observe(state, gmap, target_idx: int, u_prev, omega_max: float) -> np.ndarray:
    g = gmap.gates[target_idx % len(gmap.gates)]
    g_next = gmap.gates[(target_idx + 1) % len(gmap.gates)]
    x_g, y_g, z_g = g.axes()
    rot_g = np.stack([x_g, y_g, z_g])     # world -> gate frame

    obs = np.empty(OBS_DIM)
    obs[0:3] = rot_g @ (state.p - g.center)
    obs[3:6] = rot_g @ state.v
    roll, pitch, yaw = quat.to_euler(state.q)
    obs[6] = roll
    obs[7] = pitch
    obs[8] = wrap_angle(yaw - g.yaw)
    obs[9:12] = quat.rotate(state.q, state.Omega)
    obs[12:16] = state.omega / omega_max
    obs[16:19] = rot_g @ (g_next.center - g.center)
    obs[19] = wrap_angle(g_next.yaw - g.yaw)
    obs[20:24] = u_prev
    return obs


def observe_batch(states, gmap, target_idx, u_prev, omega_max):
    """Vectorized observation over (n, 17) state rows."""
    n = len(states)
    out = np.empty((n, OBS_DIM))
    centers = np.stack([g.center for g in gmap.gates])
    yaws = np.array([g.yaw for g in gmap.gates])
    n_gates = len(gmap.gates)
    ti = np.asarray(target_idx) % n_gates
    tn = (ti + 1) % n_gates
    cy, sy = np.cos(yaws[ti]), np.sin(yaws[ti])

    p = states[:, 0:3] - centers[ti]
    v = states[:, 3:6]
    # gate frame: x along heading, y left-handed in-plane, z down
    out[:, 0] = cy * p[:, 0] + sy * p[:, 1]
    out[:, 1] = -sy * p[:, 0] + cy * p[:, 1]
    out[:, 2] = p[:, 2]
    out[:, 3] = cy * v[:, 0] + sy * v[:, 1]
    out[:, 4] = -sy * v[:, 0] + cy * v[:, 1]
    out[:, 5] = v[:, 2]
    eul = quat.to_euler(states[:, 6:10])
    out[:, 6] = eul[:, 0]
    out[:, 7] = eul[:, 1]
    out[:, 8] = wrap_angle(eul[:, 2] - yaws[ti])
    out[:, 9:12] = quat.rotate(states[:, 6:10], states[:, 10:13])
    out[:, 12:16] = states[:, 13:17] / omega_max
    d_next = centers[tn] - centers[ti]
    out[:, 16] = cy * d_next[:, 0] + sy * d_next[:, 1]
    out[:, 17] = -sy * d_next[:, 0] + cy * d_next[:, 1]
    out[:, 18] = d_next[:, 2]
    out[:, 19] = wrap_angle(yaws[tn] - yaws[ti])
    out[:, 20:24] = u_prev
    return out
