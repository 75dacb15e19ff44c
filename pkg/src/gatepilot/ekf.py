"""16-state extended Kalman filter for IMU + gate-pose fusion.

State layout (16): position (3), velocity (3), attitude quaternion (4),
accelerometer bias (3), gyroscope bias (3).  The input is one IMU sample
[accel (3), gyro (3)] in the body frame; the continuous model is

    p' = v
    v' = R(q)(a - b_a) + g
    q' = 0.5 q x (0, w - b_g)
    b' = 0  (noise-driven random walks)

discretized by forward Euler.  The quaternion is kept in the state
additively and renormalized after every step; the covariance is full
16x16.  Process noise enters through the IMU channels and the bias
walks; during accelerometer saturation the position/attitude growth is
inflated to lean on the vision measurements.

Measurements are gate poses [p (3), q (4)] with per-measurement
variances from the corner statistics.  A measurement is accepted only
when ||p_ekf - p_meas||^2 < 16 N_c^2 trace(P_pos); the attitude rows are
dropped when the source geometry is unreliable.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, quat

GRAVITY_VEC = np.array([0.0, 0.0, 9.81])

POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 10)
BACC = slice(10, 13)
BGYR = slice(13, 16)

ACCEL_CLIP = 16.0 * 9.81  # accelerometer measurement range


@dataclass
class EkfConfig:
    # continuous noise densities; tuned on the desk track so that the
    # normalized innovation squared stays near its dimension
    accel_noise: float = 0.05          # m/s^2 / sqrt(Hz)
    gyro_noise: float = 0.002          # rad/s / sqrt(Hz)
    accel_bias_walk: float = 2e-3
    gyro_bias_walk: float = 2e-4
    init_pos_var: float = 0.04
    init_vel_var: float = 0.04
    init_att_var: float = 4e-4
    init_bias_acc_var: float = 1e-2
    init_bias_gyr_var: float = 1e-4
    gate_coeff: float = 16.0           # outlier gate scale
    saturation_alpha: float = 0.9      # EMA coefficient of the LPF pair
    saturation_threshold: float = 22.0  # m/s^2 discrepancy trigger
    saturation_inflation: float = 10.0  # noise scale while substituted

    def noise_diag(self, inflate: bool = False) -> np.ndarray:
        s = self.saturation_inflation if inflate else 1.0
        return np.array(
            [self.accel_noise**2 * s] * 3
            + [self.gyro_noise**2 * s] * 3
            + [self.accel_bias_walk**2] * 3
            + [self.gyro_bias_walk**2] * 3
        )


@dataclass
class EkfState:
    x: np.ndarray
    P: np.ndarray
    t: float

    @property
    def p(self):
        return self.x[POS]

    @property
    def v(self):
        return self.x[VEL]

    @property
    def q(self):
        return self.x[ATT]

    def copy(self) -> "EkfState":
        return EkfState(self.x.copy(), self.P.copy(), self.t)


def make_initial(p, q, t: float = 0.0, cfg: EkfConfig = None) -> EkfState:
    cfg = cfg or EkfConfig()
    x = np.zeros(16)
    x[POS] = p
    x[ATT] = quat.normalize(q)
    diag = np.concatenate([
        np.full(3, cfg.init_pos_var),
        np.full(3, cfg.init_vel_var),
        np.full(4, cfg.init_att_var),
        np.full(3, cfg.init_bias_acc_var),
        np.full(3, cfg.init_bias_gyr_var),
    ])
    return EkfState(x=x, P=np.diag(diag), t=t)


def _rotate_poly(q, v):
    """R(q) v in the homogeneous polynomial form.

    Identical to the unit-quaternion rotation on the sphere, but also
    smooth off it, which makes the additive-quaternion Jacobians exact.
    """
    w = q[0]
    qv = q[1:]
    return ((w * w - qv @ qv) * v + 2.0 * (qv @ v) * qv
            + 2.0 * w * np.cross(qv, v))


def ekf_propagate(x, u, dt):
    """Discrete process model x + f_c(x, u) dt, without renormalization."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    out = x.copy()
    q = x[ATT]
    a_body = u[0:3] - x[BACC]
    w_body = u[3:6] - x[BGYR]
    out[POS] += x[VEL] * dt
    out[VEL] += (_rotate_poly(q, a_body) + GRAVITY_VEC) * dt
    dq = 0.5 * quat.multiply(q, np.concatenate([[0.0], w_body]))
    out[ATT] += dq * dt
    return out


def _rotation_dq(q, v):
    """d(R(q) v)/dq, a 3x4 block."""
    w = q[0]
    qv = q[1:]
    col_w = 2.0 * (w * v + np.cross(qv, v))
    block = 2.0 * (qv @ v * np.eye(3) + np.outer(qv, v)
                   - np.outer(v, qv) - w * _skew(v))
    return np.concatenate([col_w[:, None], block], axis=1)


def _skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _right_mul(r):
    """Matrix with q x r = right_mul(r) @ q."""
    rw, rx, ry, rz = r
    return np.array([
        [rw, -rx, -ry, -rz],
        [rx, rw, rz, -ry],
        [ry, -rz, rw, rx],
        [rz, ry, -rx, rw],
    ])


def ekf_jacobians(x, u, dt):
    """Analytic Jacobians F = df/dx and L = df/dw of the discrete model."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    q = x[ATT]
    a_body = u[0:3] - x[BACC]
    w_body = u[3:6] - x[BGYR]
    r = quat.to_matrix(q)
    g = quat.rate_matrix(q)

    f = np.eye(16)
    f[POS, VEL] = np.eye(3) * dt
    f[VEL, ATT] = _rotation_dq(q, a_body) * dt
    f[VEL, BACC] = -r * dt
    f[ATT, ATT] = np.eye(4) + 0.5 * dt * _right_mul(
        np.concatenate([[0.0], w_body]))
    f[ATT, BGYR] = -0.5 * dt * g

    l = np.zeros((16, 12))
    l[VEL, 0:3] = -r * dt
    l[ATT, 3:6] = -0.5 * g * dt
    l[BACC, 6:9] = np.eye(3) * dt
    l[BGYR, 9:12] = np.eye(3) * dt
    return f, l


def predict(state: EkfState, u, dt: float, cfg: EkfConfig,
            inflate: bool = False) -> EkfState:
    """Time update; quaternion renormalized, covariance symmetrized."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x2, p2 = _kernels.ekf_predict(state.x, state.P, np.asarray(u, float),
                                  float(dt), cfg.noise_diag(inflate))
    if not np.all(np.isfinite(x2)):
        raise FloatingPointError("EKF state diverged")
    x2[ATT] = quat.normalize(x2[ATT])
    return EkfState(x=x2, P=p2, t=state.t + dt)


def gate_threshold(meas, p_cov, coeff: float = 16.0) -> float:
    trace_pos = float(np.trace(p_cov[POS, POS]))
    return coeff * meas.n_corners**2 * trace_pos


def update(state: EkfState, meas, accept_att: bool, cfg: EkfConfig):
    """Measurement update.

    Returns (state, accepted, nis).  The measurement is rejected by the
    covariance gate; when ``accept_att`` is false only the position rows
    are fused.  The measurement quaternion is flipped to the hemisphere
    of the prediction before the innovation is formed.
    """
    innov_pos = meas.position - state.x[POS]
    if float(innov_pos @ innov_pos) >= gate_threshold(meas, state.P,
                                                      cfg.gate_coeff):
        return state, False, 0.0

    z_q = np.asarray(meas.quaternion, dtype=np.float64)
    if float(z_q @ state.x[ATT]) < 0.0:
        z_q = -z_q

    if accept_att:
        idx = np.r_[0:3, 6:10]
        z = np.concatenate([meas.position, z_q])
        r_diag = np.concatenate([
            np.full(3, meas.sigma2_pos), np.full(4, meas.sigma2_quat)])
    else:
        idx = np.r_[0:3]
        z = np.asarray(meas.position, dtype=np.float64)
        r_diag = np.full(3, meas.sigma2_pos)

    h = np.zeros((len(idx), 16))
    h[np.arange(len(idx)), idx] = 1.0
    innov = z - state.x[idx]
    s = h @ state.P @ h.T + np.diag(r_diag)
    s_inv = np.linalg.inv(s)
    k = state.P @ h.T @ s_inv
    x2 = state.x + k @ innov
    # Joseph form keeps P positive semidefinite over long runs
    ikh = np.eye(16) - k @ h
    p2 = ikh @ state.P @ ikh.T + k @ np.diag(r_diag) @ k.T
    p2 = 0.5 * (p2 + p2.T)
    x2[ATT] = quat.normalize(x2[ATT])
    nis = float(innov @ s_inv @ innov)
    return EkfState(x=x2, P=p2, t=state.t), True, nis


@dataclass
class SaturationMonitor:
    """Accelerometer-saturation detector with substitution.

    Both the measured and the model-predicted specific force pass
    through the same first-order low-pass (EMA) filter; when the
    filtered signals disagree by more than the threshold, the model
    prediction replaces the sensor on all three axes and the filter's
    position/attitude uncertainty growth is inflated.
    """

    cfg: EkfConfig = field(default_factory=EkfConfig)
    _filt_imu: np.ndarray = None
    _filt_model: np.ndarray = None

    def update(self, a_imu, a_model):
        a_imu = np.asarray(a_imu, dtype=np.float64)
        a_model = np.asarray(a_model, dtype=np.float64)
        al = self.cfg.saturation_alpha
        if self._filt_imu is None:
            self._filt_imu = a_imu.copy()
            self._filt_model = a_model.copy()
        else:
            self._filt_imu = al * self._filt_imu + (1.0 - al) * a_imu
            self._filt_model = al * self._filt_model + (1.0 - al) * a_model
        diff = float(np.linalg.norm(self._filt_model - self._filt_imu))
        saturated = diff > self.cfg.saturation_threshold
        return (a_model if saturated else a_imu), saturated

    def reset(self):
        self._filt_imu = None
        self._filt_model = None
