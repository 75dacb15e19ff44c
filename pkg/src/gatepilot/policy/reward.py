"""Per-step reward: progress toward the target gate plus shaping terms.

    r = prog + gate - rate - offset - perception - command_change
        - low_command - crash

- progress: decrease of the distance to the target gate center, capped
  at v_max * dt so the policy cannot buy reward with unbounded speed
- gate bonus on a successful pass; offset penalty scales with the
  distance from the gate center at the passing step
- rate penalty on |Omega|^2
- perception penalty proportional to the view angle between the camera
  optical axis and the target gate center, active beyond pi/3
- command-change penalty on per-motor |du| above a threshold, and a
  low-command penalty below half throttle (both optional)
- fixed crash penalty on gate or ground collisions
"""

from dataclasses import dataclass

import numpy as np

from .. import quat


@dataclass(frozen=True)
class RewardConfig:
    lambda_prog: float = 1.0
    v_max: float = 10.0
    lambda_gate: float = 1.5
    lambda_rate: float = 0.001
    lambda_offset: float = 1.5
    lambda_perc: float = 0.01
    lambda_du: float = 0.0
    du_thresh: float = 0.0
    lambda_u: float = 0.0
    lambda_crash: float = 10.0

    def __post_init__(self):
        for name in ("lambda_prog", "lambda_gate", "lambda_rate",
                     "lambda_offset", "lambda_perc", "lambda_du",
                     "lambda_u", "lambda_crash"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


# reward parameter columns of the competition policies
REWARD_PRESETS = {
    "m16": RewardConfig(0.0, 99.0, 30.0, 0.0, 2.0, 0.1, 0.100, 0.5, 0.0, 10.0),
    "m17": RewardConfig(1.0, 99.0, 10.0, 0.001, 0.0, 0.05, 0.005, 0.3, 0.0, 10.0),
    "m18": RewardConfig(1.0, 99.0, 1.0, 0.001, 1.0, 0.01, 0.0, 0.0, 0.0, 10.0),
    "m19": RewardConfig(1.0, 99.0, 1.0, 0.001, 1.0, 0.01, 0.0, 0.0, 0.01, 10.0),
    "m22": RewardConfig(1.0, 10.0, 0.0, 0.001, 0.0, 0.01, 0.0, 0.0, 0.0, 10.0),
    "m23": RewardConfig(1.0, 10.0, 1.5, 0.001, 1.5, 0.01, 0.0, 0.0, 0.0, 10.0),
}

CRASH_KINDS = frozenset({"gate_collision", "ground_collision"})


def view_angle(q_body, cam, gate_center, position) -> float:
    """Angle between the camera optical axis and the target gate center."""
    axis = cam.optical_axis_world(q_body)
    los = np.asarray(gate_center) - np.asarray(position)
    n = np.linalg.norm(los)
    if n < 1e-9:
        return 0.0
    return float(np.arccos(np.clip(axis @ los / n, -1.0, 1.0)))


def reward(prev_state, next_state, u, u_prev, event, gate, cfg: RewardConfig,
           dt: float, cam=None) -> float:
    c = np.asarray(gate.center)
    d_prev = float(np.linalg.norm(prev_state.p - c))
    d_next = float(np.linalg.norm(next_state.p - c))
    r = cfg.lambda_prog * min(d_prev - d_next, cfg.v_max * dt)

    passed = event is not None and event.kind == "gate_passed"
    if passed:
        r += cfg.lambda_gate
        r -= cfg.lambda_offset * d_next
    r -= cfg.lambda_rate * float(next_state.Omega @ next_state.Omega)

    if cfg.lambda_perc > 0.0 and cam is not None:
        ang = view_angle(next_state.q, cam, c, next_state.p)
        if ang > np.pi / 3.0:
            r -= cfg.lambda_perc * ang

    if cfg.lambda_du > 0.0:
        du = np.abs(np.asarray(u) - np.asarray(u_prev)) - cfg.du_thresh
        r -= cfg.lambda_du * float(np.maximum(du, 0.0).sum())
    if cfg.lambda_u > 0.0:
        r -= cfg.lambda_u * float(np.maximum(0.5 - np.asarray(u), 0.0).sum())

    if event is not None and event.kind in CRASH_KINDS:
        r -= cfg.lambda_crash
    return r
