"""Wide-FOV pinhole camera with a tilted body mount.

The camera frame is OpenCV-style: x right, y down, z along the optical
axis.  With zero mount angles the optical axis coincides with body x
(forward), camera x with body y (right) and camera y with body z
(down).  Mount angles (roll, pitch, yaw, degrees) treat the camera like
a small aircraft rigidly attached to the body: pitch tilts the optical
axis up from body-x (racing quads carry 40-55 degrees of up-tilt), yaw
pans it toward body-y, roll spins it about itself.

Focal lengths derive from the field of view per axis,
``f = (npix / 2) / tan(fov / 2)``; pixels may be anisotropic.  Images
are synthesized directly in the rectified pinhole domain, so there is
no lens distortion anywhere in the pipeline.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import quat

# base alignment: camera axes (x, y, z) = body axes (y, z, x)
_R_CAM_TO_BODY0 = np.array([
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
])


@dataclass(frozen=True)
class CameraModel:
    width: int = 820
    height: int = 616
    fov_h_deg: float = 155.0
    fov_v_deg: float = 115.0
    rate_hz: float = 90.0
    mount_roll_deg: float = 0.0
    mount_pitch_deg: float = 45.0
    mount_yaw_deg: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.fov_h_deg < 180.0 and 0.0 < self.fov_v_deg < 180.0):
            raise ValueError("FOV must be in (0, 180) degrees")

    @property
    def fx(self) -> float:
        return (self.width / 2.0) / np.tan(np.deg2rad(self.fov_h_deg) / 2.0)

    @property
    def fy(self) -> float:
        return (self.height / 2.0) / np.tan(np.deg2rad(self.fov_v_deg) / 2.0)

    @property
    def cx(self) -> float:
        return (self.width - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.height - 1) / 2.0

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def mount_angles(self) -> np.ndarray:
        return np.array([self.mount_roll_deg, self.mount_pitch_deg,
                         self.mount_yaw_deg])

    def with_mount(self, roll_deg, pitch_deg, yaw_deg) -> "CameraModel":
        return replace(self, mount_roll_deg=float(roll_deg),
                       mount_pitch_deg=float(pitch_deg),
                       mount_yaw_deg=float(yaw_deg))

    def r_cam_to_body(self) -> np.ndarray:
        """Rotation taking camera-frame vectors to the body frame."""
        r = quat.to_matrix(quat.from_euler(
            np.deg2rad(self.mount_roll_deg),
            np.deg2rad(self.mount_pitch_deg),
            np.deg2rad(self.mount_yaw_deg),
        ))
        return r @ _R_CAM_TO_BODY0

    def world_to_cam(self, p_world, q_body, points):
        """World points -> camera-frame coordinates.

        p_world, q_body: vehicle pose.  points: (..., 3).
        """
        r_wb = quat.to_matrix(q_body)
        r_wc = r_wb @ self.r_cam_to_body()
        d = np.asarray(points, dtype=np.float64) - np.asarray(p_world)
        return d @ r_wc

    def project(self, pts_cam):
        """Camera-frame points -> (pixels (..., 2), in_front (...,) bool).

        Points behind the camera get no meaningful pixel; callers must
        honor the flag.
        """
        pts = np.asarray(pts_cam, dtype=np.float64)
        z = pts[..., 2]
        in_front = z > 1e-9
        zz = np.where(in_front, z, 1.0)
        px = self.cx + self.fx * pts[..., 0] / zz
        py = self.cy + self.fy * pts[..., 1] / zz
        return np.stack([px, py], axis=-1), in_front

    def project_world(self, p_world, q_body, points):
        return self.project(self.world_to_cam(p_world, q_body, points))

    def in_image(self, px) -> np.ndarray:
        px = np.asarray(px)
        return ((px[..., 0] >= 0.0) & (px[..., 0] <= self.width - 1.0)
                & (px[..., 1] >= 0.0) & (px[..., 1] <= self.height - 1.0))

    def optical_axis_world(self, q_body) -> np.ndarray:
        r_wb = quat.to_matrix(q_body)
        return (r_wb @ self.r_cam_to_body())[:, 2]
