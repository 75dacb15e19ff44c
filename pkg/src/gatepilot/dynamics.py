"""Continuous-time quadrotor model and forward-Euler propagation.

State (17 values): world position ``p``, world velocity ``v``, unit
quaternion ``q`` (body to world), body rates ``Omega`` = (p, q, r) and
the four motor speeds ``omega``.  The world frame is NED, so hover
thrust is negative along body z.

Specific forces combine linear drag (per-axis, scaled by total motor
speed), quadratic drag, and thrust corrected by blade angle of attack
``alpha = atan(v_z / (r w_bar))`` and advance ratio
``mu = atan((v_x^2 + v_y^2) / (r w_bar))`` with ``w_bar`` the summed
motor speed.  Moments mix squared motor speeds per axis plus the
gyroscopic coupling terms ``J_x q r``, ``J_y p r`` and ``J_z p q``; the
yaw channel additionally carries motor-speed and motor-acceleration
terms.  Motors follow a first-order lag toward the commanded steady
state ``(w_max - w_min) sqrt(k u^2 + (1 - k) u) + w_min``.

Integration is forward Euler at ``dt`` (default 0.01 s), evaluating all
derivatives at the incoming state in a fixed order, so stepping is a
pure, reproducible function of (state, command, params).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels, quat
from .params import ModelParams, RandomizationSpec, randomize  # noqa: F401  (re-export)

GRAVITY = 9.81
DEFAULT_DT = 0.01


@dataclass
class QuadState:
    """Full simulation state; arrays are float64 and owned by the state."""

    p: np.ndarray        # position, m (world NED)
    v: np.ndarray        # velocity, m/s (world)
    q: np.ndarray        # unit quaternion (w, x, y, z), body -> world
    Omega: np.ndarray    # body rates, rad/s
    omega: np.ndarray    # motor speeds, rad/s

    @classmethod
    def rest(cls, p=(0.0, 0.0, 0.0), yaw=0.0, omega0=None, params=None):
        """A stationary state; motors at omega_min unless given."""
        if omega0 is None:
            omega0 = (params or ModelParams()).omega_min
        return cls(
            p=np.asarray(p, dtype=np.float64).copy(),
            v=np.zeros(3),
            q=quat.from_euler(0.0, 0.0, yaw),
            Omega=np.zeros(3),
            omega=np.broadcast_to(np.asarray(omega0, dtype=np.float64), (4,)).copy(),
        )

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.q, self.Omega, self.omega])

    @classmethod
    def from_vector(cls, x) -> "QuadState":
        x = np.asarray(x, dtype=np.float64)
        return cls(p=x[0:3].copy(), v=x[3:6].copy(), q=x[6:10].copy(),
                   Omega=x[10:13].copy(), omega=x[13:17].copy())

    def copy(self) -> "QuadState":
        return QuadState(self.p.copy(), self.v.copy(), self.q.copy(),
                         self.Omega.copy(), self.omega.copy())


def motor_setpoint(u, params: ModelParams) -> np.ndarray:
    """Steady-state motor speeds for throttle commands (clamped to [0,1])."""
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
    span = params.omega_max - params.omega_min
    return span * np.sqrt(params.k * u * u + (1.0 - params.k) * u) + params.omega_min


def hover_command(params: ModelParams) -> float:
    """Throttle putting all four motors at the hover speed (T = -g)."""
    w_h = np.sqrt(GRAVITY / params.k_omega / 4.0)
    return float(invert_motor_curve(w_h, params))


def invert_motor_curve(omega_c, params: ModelParams):
    """Throttle(s) whose steady-state motor speed equals ``omega_c``."""
    s2 = ((np.asarray(omega_c, dtype=np.float64) - params.omega_min)
          / (params.omega_max - params.omega_min)) ** 2
    k = params.k
    if k == 0.0:
        return s2
    return (-(1.0 - k) + np.sqrt((1.0 - k) ** 2 + 4.0 * k * s2)) / (2.0 * k)


def hover_trim(params: ModelParams, tol: float = 1e-12) -> np.ndarray:
    """Per-motor throttle at the hover equilibrium.

    The identified moment coefficients are not symmetric, so equal
    throttles produce net moments.  This solves the four trim equations
    (zero roll/pitch/yaw moment, total thrust = g) for the motor speeds
    by Newton iteration and maps them back through the motor curve.
    """
    p = params
    s = np.full(4, np.sqrt(GRAVITY / p.k_omega / 4.0))
    kp = np.array([-p.k_p1, -p.k_p2, p.k_p3, p.k_p4])
    kq = np.array([-p.k_q1, p.k_q2, -p.k_q3, p.k_q4])
    kr = np.array([-p.k_r1, p.k_r2, p.k_r3, -p.k_r4])
    for _ in range(50):
        f = np.array([
            kp @ (s * s),
            kq @ (s * s),
            kr @ s,
            s @ s - GRAVITY / p.k_omega,
        ])
        if np.max(np.abs(f)) < tol:
            break
        jac = np.vstack([2.0 * kp * s, 2.0 * kq * s, kr, 2.0 * s])
        s = s - np.linalg.solve(jac, f)
    return np.asarray(invert_motor_curve(s, params))


def specific_forces(state: QuadState, params: ModelParams) -> np.ndarray:
    """Body-frame specific forces [D_x, D_y, T] in m/s^2.

    This is exactly what an ideal accelerometer on the vehicle measures.
    With zero total motor speed the angle-of-attack and advance-ratio
    corrections are defined as zero.
    """
    vb = quat.rotate_inverse(state.q, state.v)
    w = state.omega
    wbar = w[0] + w[1] + w[2] + w[3]
    if wbar > 0.0:
        alpha = np.arctan(vb[2] / (params.r_prop * wbar))
        mu = np.arctan((vb[0] ** 2 + vb[1] ** 2) / (params.r_prop * wbar))
    else:
        alpha = 0.0
        mu = 0.0
    sum_w2 = w[0] ** 2 + w[1] ** 2 + w[2] ** 2 + w[3] ** 2
    return np.array([
        -params.k_x * vb[0] * wbar - params.k_x2 * vb[0] * abs(vb[0]),
        -params.k_y * vb[1] * wbar - params.k_y2 * vb[1] * abs(vb[1]),
        -params.k_omega * (1.0 + params.k_alpha * alpha + params.k_hor * mu) * sum_w2,
    ])


def angular_accels(state: QuadState, motor_accels, params: ModelParams) -> np.ndarray:
    """Body angular accelerations [M_x, M_y, M_z] in rad/s^2.

    ``motor_accels`` are the current first-order-lag motor accelerations
    (omega_c - omega) / tau, which feed the yaw channel.
    """
    w = state.omega
    wd = np.asarray(motor_accels, dtype=np.float64)
    pr, qr, rr = state.Omega
    w2 = w * w
    m_x = (-params.k_p1 * w2[0] - params.k_p2 * w2[1]
           + params.k_p3 * w2[2] + params.k_p4 * w2[3] + params.J_x * qr * rr)
    m_y = (-params.k_q1 * w2[0] + params.k_q2 * w2[1]
           - params.k_q3 * w2[2] + params.k_q4 * w2[3] + params.J_y * pr * rr)
    m_z = (-params.k_r1 * w[0] + params.k_r2 * w[1]
           + params.k_r3 * w[2] - params.k_r4 * w[3]
           - params.k_r5 * wd[0] + params.k_r6 * wd[1]
           + params.k_r7 * wd[2] - params.k_r8 * wd[3]
           + params.J_z * pr * qr)
    return np.array([m_x, m_y, m_z])


def step(state: QuadState, u, params: ModelParams, dt: float = DEFAULT_DT) -> QuadState:
    """Advance the state one forward-Euler step under throttle command u."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x = state.as_vector()
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite state: {x}")
    out = _kernels.quad_step_batch(
        x[None, :], np.asarray(u, dtype=np.float64)[None, :],
        params.as_vector()[None, :], float(dt),
    )
    return QuadState.from_vector(out[0])


def step_batch(states, commands, param_rows, dt: float = DEFAULT_DT) -> np.ndarray:
    """Vectorized step over (n, 17) states; see the kernel for layout."""
    return _kernels.quad_step_batch(states, commands, param_rows, float(dt))
