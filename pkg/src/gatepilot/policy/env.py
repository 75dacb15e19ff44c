"""Vectorized closed-loop training environment.

Runs N independent episodes as flat numpy arrays: one quadrotor state
row per environment, per-episode randomized model parameters, a shared
gate map and reward configuration.  Stepping, event classification and
observation construction are all batched; the only Python-level loop is
over the (few) gates for the frame-box collision test.

Episodes terminate on gate/ground collisions, out-of-bounds, the
body-rate cutoff, or once every required gate pass is collected
(success); they truncate at ``max_steps`` (bootstrapped, not a
failure).
"""

from dataclasses import dataclass, field

import numpy as np

from .. import quat
from ..camera import CameraModel
from ..dynamics import DEFAULT_DT, motor_setpoint
from ..params import ModelParams, RandomizationSpec, randomize_batch
from ..track import GateMap, RATE_LIMIT
from .observation import OBS_DIM, observe_batch
from .reward import RewardConfig


@dataclass
class EnvConfig:
    reward: RewardConfig = field(default_factory=RewardConfig)
    dt: float = DEFAULT_DT
    max_steps: int = 1200
    h_ground: float = 0.0
    v_ground: float = 2.0
    gate_inner_m: float = None      # training override of the opening size
    init_mode: str = "mixed"        # ground | uniform | mixed
    ground_frac: float = 0.3        # share of ground starts in mixed mode
    cam_pitch_deg: float = 45.0     # perception-penalty camera mount
    box_samples: int = 8
    oob_is_crash: bool = True       # leaving the arena costs the crash
    # penalty during training (the walls are physical netting; without
    # this, sinking out of the volume is a free episode exit)


class VecEnv:
    def __init__(self, gmap: GateMap, params: ModelParams,
                 rand_spec: RandomizationSpec, cfg: EnvConfig, n_envs: int,
                 seed: int):
        self.base_map = gmap
        self.gmap = (gmap.with_inner_size(cfg.gate_inner_m)
                     if cfg.gate_inner_m else gmap)
        self.params = params
        self.rand_spec = rand_spec
        self.cfg = cfg
        self.n = n_envs
        self.rng = np.random.default_rng(seed)
        self.cam = CameraModel(mount_pitch_deg=cfg.cam_pitch_deg)

        g = self.gmap.gates
        self.centers = np.stack([gate.center for gate in g])
        self.yaws = np.array([gate.yaw for gate in g])
        self.inner_half = np.array([gate.inner_size / 2 for gate in g])
        self.outer_half = np.array([gate.outer_size / 2 for gate in g])
        self.thick_half = np.array([gate.thickness / 2 for gate in g])
        self.n_gates = len(g)
        self.required_passes = self.gmap.total_passes()

        self.states = np.zeros((self.n, 17))
        self.par_rows = np.zeros((self.n, 31))
        self.target = np.zeros(self.n, dtype=np.int64)
        self.passes = np.zeros(self.n, dtype=np.int64)
        self.u_prev = np.zeros((self.n, 4))
        self.steps = np.zeros(self.n, dtype=np.int64)
        self.episode_return = np.zeros(self.n)
        self.reset_all()

    # -- initialization ------------------------------------------------

    def reset_all(self):
        self._reset_rows(np.arange(self.n))

    def _reset_rows(self, idx):
        m = len(idx)
        if m == 0:
            return
        self.par_rows[idx] = randomize_batch(self.params, self.rand_spec,
                                             self.rng, m)
        mode = self.cfg.init_mode
        if mode == "mixed":
            ground = self.rng.random(m) < self.cfg.ground_frac
        elif mode == "ground":
            ground = np.ones(m, dtype=bool)
        else:
            ground = np.zeros(m, dtype=bool)

        states = np.zeros((m, 17))
        targets = np.zeros(m, dtype=np.int64)
        u0 = np.zeros((m, 4))

        gi = np.where(ground)[0]
        if len(gi):
            xy = self.gmap.start[:2] + self.rng.uniform(-0.5, 0.5, (len(gi), 2))
            psi = self.yaws[0] + self.rng.uniform(-np.pi / 4, np.pi / 4, len(gi))
            states[gi, 0:2] = xy
            states[gi, 2] = self.gmap.start[2]
            states[gi, 6:10] = quat.from_euler(0.0, 0.0, psi)
            targets[gi] = 0
        ui = np.where(~ground)[0]
        if len(ui):
            b = self.gmap.bounds
            states[ui, 0:3] = self.rng.uniform(b[:, 0], b[:, 1], (len(ui), 3))
            states[ui, 3:6] = self.rng.uniform(-0.5, 0.5, (len(ui), 3))
            roll = self.rng.uniform(-np.pi / 9, np.pi / 9, len(ui))
            pitch = self.rng.uniform(-np.pi / 9, np.pi / 9, len(ui))
            psi = self.rng.uniform(-np.pi, np.pi, len(ui))
            states[ui, 6:10] = quat.from_euler(roll, pitch, psi)
            states[ui, 10:13] = self.rng.uniform(-0.1, 0.1, (len(ui), 3))
            u0[ui] = self.rng.uniform(-1.0, 1.0, (len(ui), 4))
            targets[ui] = self._nearest_ahead(states[ui, 0:3])
        # motor speeds at the steady state of the clamped initial command
        for k in range(m):
            par = ModelParams.from_vector(self.par_rows[idx[k]])
            states[k, 13:17] = motor_setpoint(np.clip(u0[k], 0.0, 1.0), par)

        self.states[idx] = states
        self.target[idx] = targets
        self.passes[idx] = 0
        self.u_prev[idx] = u0
        self.steps[idx] = 0
        self.episode_return[idx] = 0.0

    def _nearest_ahead(self, pos):
        rel = pos[:, None, :] - self.centers[None, :, :]
        cy, sy = np.cos(self.yaws), np.sin(self.yaws)
        along = rel[:, :, 0] * cy + rel[:, :, 1] * sy
        dist = np.linalg.norm(rel, axis=2)
        dist = np.where(along < 0.0, dist, np.inf)
        best = np.argmin(dist, axis=1)
        best[~np.isfinite(dist[np.arange(len(pos)), best])] = 0
        return best

    # -- stepping --------------------------------------------------------

    def observe(self) -> np.ndarray:
        return observe_batch(self.states, self.gmap, self.target,
                             self.u_prev, self.params.omega_max)

    def step(self, actions):
        """Apply clamped commands; returns (obs, reward, done, truncated,
        success) arrays.  Rows that finish are reset in place; the
        returned observation is from the (possibly reset) state."""
        from ..dynamics import step_batch

        cfg = self.cfg
        u = np.clip(actions, 0.0, 1.0)
        prev_p = self.states[:, 0:3].copy()
        prev_dist = np.linalg.norm(prev_p - self.centers[self.target], axis=1)

        nxt = step_batch(self.states, u, self.par_rows, cfg.dt)
        nxt_p = nxt[:, 0:3]

        rate_hit = np.any(np.abs(nxt[:, 10:13]) > RATE_LIMIT, axis=1)
        speed = np.linalg.norm(nxt[:, 3:6], axis=1)
        ground_hit = (nxt_p[:, 2] > -cfg.h_ground) & (speed > cfg.v_ground)
        b = self.gmap.bounds
        oob = ((nxt_p[:, 0] < b[0, 0]) | (nxt_p[:, 0] > b[0, 1])
               | (nxt_p[:, 1] < b[1, 0]) | (nxt_p[:, 1] > b[1, 1])
               | (nxt_p[:, 2] < b[2, 0] - 0.5) | (nxt_p[:, 2] > b[2, 1] + 0.5))

        box_hit = np.zeros(self.n, dtype=bool)
        for gi in range(self.n_gates):
            box_hit |= self._segment_hits_box(prev_p, nxt_p, gi)

        passed, crossed_out, offset = self._target_plane(prev_p, nxt_p)

        crash = box_hit | ground_hit | crossed_out
        penalized = crash | ((oob | rate_hit) if cfg.oob_is_crash else crash)
        rew = self._reward(prev_dist, nxt, u, passed, offset, penalized)
        terminal = crash | oob | rate_hit

        # bookkeeping for passes and the lap counter
        adv = passed & ~terminal
        self.passes[adv] += 1
        success = self.passes >= self.required_passes
        terminal |= success
        self.target[adv] = (self.target[adv] + 1) % self.n_gates

        self.states = nxt
        self.u_prev = u
        self.steps += 1
        truncated = (self.steps >= cfg.max_steps) & ~terminal
        self.episode_return += rew

        done_rows = np.where(terminal | truncated)[0]
        finished_return = self.episode_return[done_rows].copy()
        finished_success = success[done_rows].copy()
        final_obs = None
        if len(done_rows):
            # pre-reset observations of finished rows (value bootstrap
            # for truncations)
            final_obs = self.observe()[done_rows]
        self._reset_rows(done_rows)
        return (self.observe(), rew, terminal, truncated,
                {"rows": done_rows, "returns": finished_return,
                 "success": finished_success, "final_obs": final_obs})

    def _segment_hits_box(self, p0, p1, gi):
        c = self.centers[gi]
        cy, sy = np.cos(self.yaws[gi]), np.sin(self.yaws[gi])

        def to_gate(p):
            d = p - c
            return np.stack([d[:, 0] * cy + d[:, 1] * sy,
                             -d[:, 0] * sy + d[:, 1] * cy,
                             d[:, 2]], axis=1)

        a = to_gate(p0)
        bb = to_gate(p1)
        ht = self.thick_half[gi]
        dx = bb[:, 0] - a[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-ht - a[:, 0]) / dx
            tb = (ht - a[:, 0]) / dx
        t0 = np.clip(np.minimum(ta, tb), 0.0, 1.0)
        t1 = np.clip(np.maximum(ta, tb), 0.0, 1.0)
        parallel = np.abs(dx) < 1e-12
        inside_slab = np.abs(a[:, 0]) <= ht
        t0 = np.where(parallel, 0.0, t0)
        t1 = np.where(parallel, 1.0, t1)
        valid = np.where(parallel, inside_slab, t1 >= t0)

        ts = np.linspace(0.0, 1.0, self.cfg.box_samples)
        tt = t0[:, None] + (t1 - t0)[:, None] * ts[None, :]
        y = a[:, None, 1] + tt * (bb[:, 1] - a[:, 1])[:, None]
        z = a[:, None, 2] + tt * (bb[:, 2] - a[:, 2])[:, None]
        m = np.maximum(np.abs(y), np.abs(z))
        in_band = (m >= self.inner_half[gi]) & (m <= self.outer_half[gi])
        return valid & np.any(in_band, axis=1)

    def _target_plane(self, p0, p1):
        ti = self.target
        c = self.centers[ti]
        cy, sy = np.cos(self.yaws[ti]), np.sin(self.yaws[ti])
        a0 = (p0[:, 0] - c[:, 0]) * cy + (p0[:, 1] - c[:, 1]) * sy
        a1 = (p1[:, 0] - c[:, 0]) * cy + (p1[:, 1] - c[:, 1]) * sy
        crossing = (a0 < 0.0) & (a1 >= 0.0)
        t = np.where(crossing, a0 / np.where(a0 == a1, 1.0, a0 - a1), 0.0)
        px = p0 + t[:, None] * (p1 - p0)
        d = px - c
        off_y = -d[:, 0] * sy + d[:, 1] * cy
        off_z = d[:, 2]
        inside = np.maximum(np.abs(off_y), np.abs(off_z)) <= self.inner_half[ti]
        passed = crossing & inside
        crossed_out = crossing & ~inside
        return passed, crossed_out, np.hypot(off_y, off_z)

    def _reward(self, prev_dist, nxt, u, passed, offset, crash):
        cfg = self.cfg.reward
        next_dist = np.linalg.norm(nxt[:, 0:3] - self.centers[self.target],
                                   axis=1)
        r = cfg.lambda_prog * np.minimum(prev_dist - next_dist,
                                         cfg.v_max * self.cfg.dt)
        r += np.where(passed, cfg.lambda_gate, 0.0)
        r -= np.where(passed, cfg.lambda_offset * next_dist, 0.0)
        r -= cfg.lambda_rate * np.sum(nxt[:, 10:13] ** 2, axis=1)
        if cfg.lambda_perc > 0.0:
            axis = self._optical_axes(nxt[:, 6:10])
            los = self.centers[self.target] - nxt[:, 0:3]
            nl = np.linalg.norm(los, axis=1)
            cosang = np.einsum("ij,ij->i", axis, los) / np.maximum(nl, 1e-9)
            ang = np.arccos(np.clip(cosang, -1.0, 1.0))
            r -= np.where(ang > np.pi / 3, cfg.lambda_perc * ang, 0.0)
        if cfg.lambda_du > 0.0:
            du = np.abs(u - self.u_prev) - cfg.du_thresh
            r -= cfg.lambda_du * np.maximum(du, 0.0).sum(axis=1)
        if cfg.lambda_u > 0.0:
            r -= cfg.lambda_u * np.maximum(0.5 - u, 0.0).sum(axis=1)
        r -= np.where(crash, cfg.lambda_crash, 0.0)
        return r

    def _optical_axes(self, qs):
        r_bc = self.cam.r_cam_to_body()
        fwd_body = r_bc[:, 2]
        return quat.rotate(qs, fwd_body)
