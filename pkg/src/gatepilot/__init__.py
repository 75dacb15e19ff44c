"""gatepilot: a deterministic quadrotor gate-racing stack.

Simulation, learning and estimation components for flying a quadrotor
through square racing gates using only a forward camera and an IMU:

- ``dynamics``     rigid-body quadrotor model with motor lag and
                   per-episode parameter randomization
- ``track``        gate maps, gate-passing / collision events, episode
                   initialization
- ``policy``       observation construction, reward shaping, a small MLP
                   controller and a PPO trainer (all numpy)
- ``camera``       wide-FOV pinhole camera with a body mount
- ``vision``       gate selection, adaptive cropping, mask rendering and
                   corruption injection
- ``corners``      sub-pixel gate-corner extraction from binary masks and
                   robust matching against projected priors
- ``pnp``          multi-gate perspective-n-point pose estimation with a
                   de-rotated position fallback
- ``ekf``          16-state extended Kalman filter with accelerometer
                   saturation substitution
- ``fusion``       measurement-delay compensation by rewind-and-replay
- ``calibration``  mask-reprojection IoU scoring and derivative-free
                   refinement of estimation parameters

Conventions (used everywhere, see module docstrings for details):

- World frame: NED (x north, y east, z down). Gravity is +9.81 on z.
- Body frame: FRD (x forward, y right, z down).
- Quaternions are scalar-first (w, x, y, z) and rotate body to world.
- Euler angles are aerospace ZYX: yaw about z, then pitch, then roll.
- Camera frame: x right, y down, z along the optical axis.
- Image coordinates: x right, y down, pixel centers at integer positions.

All stochastic code takes explicit seeds; repeated runs with the same
configuration are bit-identical.
"""

__version__ = "0.1.0"
