"""Synthetic gate vision: corner projection, gate selection, adaptive
cropping, mask rendering and interference-style corruption.

The camera sees gates as binary segmentation masks of the frame annulus
(the band between inner and outer square).  Masks are rasterized
geometrically from a pose and the gate map, which stands in for a
segmentation network: one rendered from the true state plays the role
of the observed segmentation, one rendered from an estimated state is
the reprojection used for IoU scoring.

Processing is restricted to a square crop window.  Four strategies fill
it: ``resized`` squeezes the whole image ignoring aspect ratio,
``resized_fixed_ar`` scales to 511x384 and center-crops, ``center``
crops the image middle at full resolution, and ``adaptive`` follows the
predicted corners of the selected gates: a direct full-resolution crop
when they fit, otherwise a resize-then-crop around the predicted gate
location.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .camera import CameraModel
from .track import GateMap

CROP_SIZE = 384
STRATEGIES = ("resized", "resized_fixed_ar", "center", "adaptive")

_NEAR_PLANE = 0.05


@dataclass(frozen=True)
class CropWindow:
    """Square processing window: window_px = (full_px - origin) * scale."""

    x0: float
    y0: float
    sx: float
    sy: float
    size: int = CROP_SIZE

    def full_to_window(self, px):
        px = np.asarray(px, dtype=np.float64)
        out = np.empty_like(px)
        out[..., 0] = (px[..., 0] - self.x0) * self.sx
        out[..., 1] = (px[..., 1] - self.y0) * self.sy
        return out

    def window_to_full(self, px):
        px = np.asarray(px, dtype=np.float64)
        out = np.empty_like(px)
        out[..., 0] = px[..., 0] / self.sx + self.x0
        out[..., 1] = px[..., 1] / self.sy + self.y0
        return out

    def contains(self, px_window):
        px = np.asarray(px_window)
        return ((px[..., 0] >= 0.0) & (px[..., 0] <= self.size - 1.0)
                & (px[..., 1] >= 0.0) & (px[..., 1] <= self.size - 1.0))


def gate_corners_3d(gate):
    """(8, 3) corner points: 0-3 inner TL,TR,BR,BL then 4-7 outer."""
    return np.vstack([gate.corners(inner=True), gate.corners(inner=False)])


def project_corners(p_world, q_body, cam: CameraModel, gmap: GateMap):
    """Pixel predictions for all gate corners.

    Returns (pixels (n_gates, 8, 2), visible (n_gates, 8)); visibility is
    in-front-of-camera AND inside the full image.
    """
    pts = np.stack([gate_corners_3d(g) for g in gmap.gates])
    cam_pts = cam.world_to_cam(p_world, q_body, pts.reshape(-1, 3))
    px, in_front = cam.project(cam_pts)
    px = px.reshape(len(gmap.gates), 8, 2)
    in_front = in_front.reshape(len(gmap.gates), 8)
    visible = in_front & cam.in_image(px)
    return px, visible


def select_gates(p_world, q_body, cam: CameraModel, gmap: GateMap,
                 max_gates: int = 2, max_obliquity_deg: float = 65.0):
    """Indices of the (up to two) closest usable gates.

    A gate is excluded when its projected center falls outside the image,
    when it is behind the camera, or when it is viewed at an excessively
    oblique angle (angle between gate normal and the line of sight above
    the threshold).
    """
    usable = []
    p_world = np.asarray(p_world, dtype=np.float64)
    for i, g in enumerate(gmap.gates):
        c_cam = cam.world_to_cam(p_world, q_body, g.center)
        if c_cam[2] <= _NEAR_PLANE:
            continue
        px, _ = cam.project(c_cam)
        if not cam.in_image(px):
            continue
        los = g.center - p_world
        dist = np.linalg.norm(los)
        if dist < 1e-9:
            continue
        x_g, _, _ = g.axes()
        cosang = abs(float(x_g @ los)) / dist
        if np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))) > max_obliquity_deg:
            continue
        usable.append((dist, i))
    usable.sort()
    return [i for _, i in usable[:max_gates]]


def crop(predicted_px, strategy: str, cam: CameraModel,
         size: int = CROP_SIZE, margin: float = 24.0) -> CropWindow:
    """Choose the processing window for one frame.

    ``predicted_px`` are the predicted corner pixels of the selected
    gates, (n, 2) in full-image coordinates (may be empty for the
    state-independent strategies).
    """
    w, h = cam.width, cam.height
    if strategy == "resized":
        return CropWindow(0.0, 0.0, size / w, size / h, size)
    if strategy == "resized_fixed_ar":
        s = size / h
        covered = size / s
        return CropWindow((w - covered) / 2.0, 0.0, s, s, size)
    if strategy == "center":
        return CropWindow((w - size) / 2.0, (h - size) / 2.0, 1.0, 1.0, size)
    if strategy != "adaptive":
        raise ValueError(f"unknown crop strategy {strategy!r}")

    pts = np.asarray(predicted_px, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        # nothing predicted: fall back to the fixed-AR full view
        return crop(pts, "resized_fixed_ar", cam, size)
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    span = hi - lo
    ctr = 0.5 * (lo + hi)
    if span[0] <= size and span[1] <= size:
        x0 = np.clip(ctr[0] - size / 2.0, 0.0, max(0.0, w - size))
        y0 = np.clip(ctr[1] - size / 2.0, 0.0, max(0.0, h - size))
        return CropWindow(float(x0), float(y0), 1.0, 1.0, size)
    s = min(size / span[0], size / span[1])
    covered = size / s
    x0 = ctr[0] - covered / 2.0
    y0 = ctr[1] - covered / 2.0
    if covered <= w:
        x0 = np.clip(x0, 0.0, w - covered)
    if covered <= h:
        y0 = np.clip(y0, 0.0, h - covered)
    return CropWindow(float(x0), float(y0), float(s), float(s), size)


def _clip_near(pts_cam):
    """Sutherland-Hodgman clip of a polygon against z >= near."""
    out = []
    n = len(pts_cam)
    for i in range(n):
        a = pts_cam[i]
        b = pts_cam[(i + 1) % n]
        a_in = a[2] >= _NEAR_PLANE
        b_in = b[2] >= _NEAR_PLANE
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (_NEAR_PLANE - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    return np.array(out) if len(out) >= 3 else None


def _window_polygon(pts_world, p_world, q_body, cam, window):
    cam_pts = cam.world_to_cam(p_world, q_body, pts_world)
    clipped = _clip_near(cam_pts)
    if clipped is None:
        return None
    px, _ = cam.project(clipped)
    return window.full_to_window(px)


def render_mask(p_world, q_body, cam: CameraModel, gmap: GateMap,
                window: CropWindow, gate_indices=None, gate_ids=False):
    """Rasterize gate annuli into the window; 1 = gate frame.

    ``gate_indices`` limits rendering (default: every gate).  With
    ``gate_ids`` a second (size, size) int array maps pixels to gate
    index + 1 (later gates overwrite earlier on overlap).
    """
    size = window.size
    mask = np.zeros((size, size), dtype=np.uint8)
    ids = np.zeros((size, size), dtype=np.int16) if gate_ids else None
    indices = range(len(gmap.gates)) if gate_indices is None else gate_indices
    tmp = np.zeros_like(mask)
    for i in indices:
        g = gmap.gates[i]
        outer = _window_polygon(g.corners(inner=False), p_world, q_body, cam, window)
        if outer is None:
            continue
        if (np.all(outer[:, 0] < 0) or np.all(outer[:, 0] > size - 1)
                or np.all(outer[:, 1] < 0) or np.all(outer[:, 1] > size - 1)):
            continue
        tmp[:] = 0
        _kernels.fill_convex_poly(tmp, outer[:, 0], outer[:, 1], 1)
        inner = _window_polygon(g.corners(inner=True), p_world, q_body, cam, window)
        if inner is not None:
            _kernels.fill_convex_poly(tmp, inner[:, 0], inner[:, 1], 0)
        mask |= tmp
        if gate_ids:
            ids[tmp > 0] = i + 1
    return (mask, ids) if gate_ids else mask


def iou(mask_a, mask_b) -> float:
    """Intersection over union; NaN when both masks are empty."""
    a = np.asarray(mask_a) > 0
    b = np.asarray(mask_b) > 0
    union = np.count_nonzero(a | b)
    if union == 0:
        return float("nan")
    return np.count_nonzero(a & b) / union


def corrupt(mask, severity: float, rng):
    """Interference-style corruption of one frame.

    With probability ``severity`` the frame is affected: a horizontal
    band is erased, a band is vertically displaced, and a few blocky
    artifacts are injected.  Returns (mask, corrupted_flag); clean frames
    come back unchanged (same object).
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if not 0.0 <= severity <= 1.0:
        raise ValueError("severity must be in [0, 1]")
    if rng.random() >= severity:
        return mask, False
    out = mask.copy()
    h, w = out.shape
    # horizontal band erasure
    bh = int(rng.uniform(0.15, 0.4) * h)
    y0 = int(rng.uniform(0, h - bh))
    out[y0:y0 + bh] = 0
    # vertical displacement of a band (stale rows shifted down)
    sh = int(rng.uniform(0.1, 0.3) * h)
    y1 = int(rng.uniform(0, h - sh))
    shift = int(rng.uniform(5, 40))
    band = out[y1:y1 + sh].copy()
    out[min(y1 + shift, h - sh):min(y1 + shift, h - sh) + sh] = band
    # blocky noise artifacts
    for _ in range(rng.integers(2, 6)):
        bw = int(rng.uniform(4, 40))
        bh2 = int(rng.uniform(2, 12))
        x0 = int(rng.uniform(0, max(1, w - bw)))
        y2 = int(rng.uniform(0, max(1, h - bh2)))
        out[y2:y2 + bh2, x0:x0 + bw] = 1
    return out, True
