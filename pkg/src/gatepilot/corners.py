"""Sub-pixel gate-corner extraction from binary masks.

Corners come from line intersections rather than mask extremities, so
rounded or nibbled segmentations still give steady estimates:

1. The mask is derotated with the estimated attitude so that the world
   up-direction points up in the image.
2. Boundary crack contours are split into straight pieces and refined
   by total-least-squares line fits (split-and-merge; this replaces an
   off-the-shelf segment detector, with an angular merge tolerance and
   a minimum support length as the tuning knobs).
3. Segments are extended symmetrically to 5/3 of their length and
   near-perpendicular pairs are intersected to form corner candidates.
4. Each candidate carries a 4-bit descriptor [v_TL, v_TR, v_BR, v_BL]
   sampled 5 px along the two intersecting line directions.
5. Candidates are matched to projected prior corners: identical
   descriptor, within 100 px, then a RANSAC-fitted 4-DoF similarity
   (translation, rotation, uniform scale) keeps the consistent subset.
   Solutions translating more than 150 px are rejected outright.

All positions are in (derotated) window pixel coordinates; helpers map
back through the derotation.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, quat

DESCRIPTOR_SAMPLE_PX = 5.0
EXTEND_FACTOR = 5.0 / 3.0
PRIOR_RADIUS_PX = 100.0
RANSAC_THRESH_PX = 5.0
MAX_TRANSLATION_PX = 150.0


@dataclass
class LineSegment:
    p0: np.ndarray
    p1: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    @property
    def direction(self) -> np.ndarray:
        d = self.p1 - self.p0
        return d / (np.linalg.norm(d) + 1e-300)

    @property
    def orientation(self) -> float:
        d = self.direction
        return float(np.arctan2(d[1], d[0]))


@dataclass
class CornerCandidate:
    px: np.ndarray              # sub-pixel position, derotated window coords
    descriptor: tuple           # (v_TL, v_TR, v_BR, v_BL)
    line_i: int = -1
    line_j: int = -1


@dataclass
class CornerPrior:
    gate_idx: int
    corner_idx: int             # 0-3 inner, 4-7 outer (TL, TR, BR, BL)
    px: np.ndarray              # derotated window coords
    descriptor: tuple


@dataclass
class CornerMatch:
    prior: CornerPrior
    candidate: CornerCandidate
    inlier: bool = True


@dataclass
class MatchResult:
    matches: list = field(default_factory=list)   # inlier matches only
    transform: tuple = None                       # (scale, theta, tx, ty)
    rejected: bool = False                        # over the translation cap


def derotation_angle(q_body, cam) -> float:
    """Content rotation that makes world-up point up in the image."""
    r_wc = quat.to_matrix(q_body) @ cam.r_cam_to_body()
    up_cam = r_wc.T @ np.array([0.0, 0.0, -1.0])
    if np.hypot(up_cam[0], up_cam[1]) < 1e-9:
        return 0.0
    return float(-np.arctan2(up_cam[0], -up_cam[1]))


def derotate_mask(mask, angle):
    if angle == 0.0:
        return mask
    c = (mask.shape[1] - 1) / 2.0, (mask.shape[0] - 1) / 2.0
    return _kernels.rotate_mask_nn(mask, angle, c[0], c[1])


def derotate_points(px, angle, size):
    """Map window points into the derotated frame (same transform the
    mask undergoes)."""
    px = np.asarray(px, dtype=np.float64)
    c = (size - 1) / 2.0
    ca, sa = np.cos(angle), np.sin(angle)
    x = px[..., 0] - c
    y = px[..., 1] - c
    return np.stack([ca * x - sa * y + c, sa * x + ca * y + c], axis=-1)


def underotate_points(px, angle, size):
    return derotate_points(px, -angle, size)


def _fit_line(pts):
    """Total-least-squares line fit; returns (center, direction, rms)."""
    c = pts.mean(axis=0)
    d = pts - c
    cov = d.T @ d
    w, v = np.linalg.eigh(cov)
    direction = v[:, 1]           # major axis
    rms = np.sqrt(max(w[0], 0.0) / max(len(pts), 1))
    return c, direction, rms


def _split_chain(pts, tol, out):
    """Recursive straight-piece split of an open vertex chain."""
    if len(pts) < 2:
        return
    a, b = pts[0], pts[-1]
    ab = b - a
    nrm = np.linalg.norm(ab)
    if nrm < 1e-12:
        return
    n = np.array([-ab[1], ab[0]]) / nrm
    dev = np.abs((pts - a) @ n)
    k = int(np.argmax(dev))
    if dev[k] > tol and 0 < k < len(pts) - 1:
        _split_chain(pts[: k + 1], tol, out)
        _split_chain(pts[k:], tol, out)
    else:
        out.append(pts)


def _merge_pieces(pieces, angle_tol_deg, tol):
    """Merge consecutive near-collinear pieces (staircase over-splits)."""
    merged = [pieces[0]]
    for piece in pieces[1:]:
        prev = merged[-1]
        _, d1, _ = _fit_line(prev)
        _, d2, _ = _fit_line(piece)
        ang = np.degrees(np.arccos(np.clip(abs(d1 @ d2), -1.0, 1.0)))
        if ang < angle_tol_deg:
            joined = np.vstack([prev, piece[1:]])
            _, _, rms = _fit_line(joined)
            if rms < tol:
                merged[-1] = joined
                continue
        merged.append(piece)
    return merged


def detect_lines(mask, attitude=None, cam=None, min_length: float = 10.0,
                 split_tol: float = 1.3, merge_angle_deg: float = 20.0):
    """Extract boundary line segments from a (derotated) binary mask.

    When ``attitude`` and ``cam`` are given the mask is derotated first;
    returns (segments, derotated_mask, angle).  On a clean axis-aligned
    square annulus each visible side yields exactly one segment.
    """
    angle = 0.0
    if attitude is not None and cam is not None:
        angle = derotation_angle(attitude, cam)
    d_mask = derotate_mask(mask, angle)
    segments = []
    if d_mask.any():
        for loop in _kernels.trace_contours(d_mask):
            segments.extend(_segments_from_loop(loop, min_length, split_tol,
                                                merge_angle_deg))
    return segments, d_mask, angle


def _segments_from_loop(loop, min_length, split_tol, merge_angle_deg):
    pts = loop[:-1]  # closed: last repeats first
    if len(pts) < 8:
        return []
    # open the ring at the two mutually farthest-ish vertices
    d0 = np.linalg.norm(pts - pts[0], axis=1)
    a = int(np.argmax(d0))
    da = np.linalg.norm(pts - pts[a], axis=1)
    b = int(np.argmax(da))
    lo, hi = sorted((a, b))
    chains = [pts[lo:hi + 1]]
    tail = np.vstack([pts[hi:], pts[: lo + 1]])
    chains.append(tail)
    pieces = []
    for chain in chains:
        _split_chain(chain, split_tol, pieces)
    if not pieces:
        return []
    pieces = _merge_pieces(pieces, merge_angle_deg, split_tol)
    segments = []
    for piece in pieces:
        if len(piece) < 4:
            continue
        c, d, _ = _fit_line(piece)
        t = (piece - c) @ d
        seg = LineSegment(c + t.min() * d, c + t.max() * d)
        if seg.length >= min_length:
            segments.append(seg)
    return segments


def corner_candidates(segments, mask, perp_window_deg: float = 35.0,
                      sample_px: float = DESCRIPTOR_SAMPLE_PX):
    """Intersect near-perpendicular extended segments into candidates.

    Segments are extended to 5/3 of their length (a third of the
    original length added, split over both ends); intersections must lie
    on both extended segments.  Descriptors sample the mask ``sample_px``
    along each line direction toward the four quadrants.
    """
    cands = []
    n = len(segments)
    for i in range(n):
        si = segments[i]
        for j in range(i + 1, n):
            sj = segments[j]
            di, dj = si.direction, sj.direction
            cross = float(di[0] * dj[1] - di[1] * dj[0])
            ang = np.degrees(np.arcsin(np.clip(abs(cross), -1.0, 1.0)))
            if ang < 90.0 - perp_window_deg:
                continue
            p = _intersect(si, sj)
            if p is None:
                continue
            if not (_on_extended(si, p) and _on_extended(sj, p)):
                continue
            desc = _descriptor(mask, p, si.direction, sj.direction, sample_px)
            cands.append(CornerCandidate(p, desc, i, j))
    return cands


def _intersect(a: LineSegment, b: LineSegment):
    da, db = a.direction, b.direction
    denom = float(da[0] * db[1] - da[1] * db[0])
    if abs(denom) < 1e-12:
        return None
    w = b.p0 - a.p0
    t = float(w[0] * db[1] - w[1] * db[0]) / denom
    return a.p0 + t * da


def _on_extended(seg: LineSegment, p, factor: float = EXTEND_FACTOR) -> bool:
    ext = seg.length * (factor - 1.0) / 2.0
    t = float((p - seg.p0) @ seg.direction)
    return -ext <= t <= seg.length + ext


def _descriptor(mask, p, d1, d2, sample_px):
    """[v_TL, v_TR, v_BR, v_BL] sampled along the two line directions."""
    # orient one direction x-ish rightward, the other y-ish downward
    if abs(d1[0]) >= abs(d2[0]):
        dh, dv = d1, d2
    else:
        dh, dv = d2, d1
    if dh[0] < 0:
        dh = -dh
    if dv[1] < 0:
        dv = -dv
    h, w = mask.shape
    vals = []
    for sh, sv in ((-1, -1), (+1, -1), (+1, +1), (-1, +1)):  # TL TR BR BL
        q = p + sh * sample_px * dh + sv * sample_px * dv
        x = int(np.floor(q[0] + 0.5))
        y = int(np.floor(q[1] + 0.5))
        if 0 <= x < w and 0 <= y < h:
            vals.append(int(mask[y, x] != 0))
        else:
            vals.append(0)
    return tuple(vals)


# corner ring neighbours within TL,TR,BR,BL ordering
_RING_NEIGHBOURS = {0: (3, 1), 1: (0, 2), 2: (1, 3), 3: (2, 0)}


def _interior_quadrant(ring_px, corner_idx, ambiguity: float = 0.15):
    """Quadrant index of the interior bisector at a projected ring corner.

    ``ring_px``: (4, 2) projected pixels of the corner's own ring (inner
    or outer square), TL,TR,BR,BL order; ``corner_idx`` in 0..3 within
    the ring.  The bisector of the two adjacent projected edges points
    into the annulus (outer ring) or into the hole (inner ring); its
    quadrant determines the expected descriptor.  Returns None when the
    bisector is too close to a quadrant boundary to be reliable.
    """
    c = ring_px[corner_idx]
    na, nb = _RING_NEIGHBOURS[corner_idx]
    da = ring_px[na] - c
    db = ring_px[nb] - c
    la, lb = np.linalg.norm(da), np.linalg.norm(db)
    if la < 1e-9 or lb < 1e-9:
        return None
    m = da / la + db / lb
    lm = np.linalg.norm(m)
    if lm < 1e-9:
        return None
    m = m / lm
    if abs(m[0]) < ambiguity or abs(m[1]) < ambiguity:
        return None
    quad = {(-1, -1): 0, (1, -1): 1, (1, 1): 2, (-1, 1): 3}[
        (int(np.sign(m[0])), int(np.sign(m[1])))
    ]
    return quad


def prior_descriptor(ring_px, corner_idx, inner: bool, ambiguity: float = 0.15):
    quad = _interior_quadrant(ring_px, corner_idx, ambiguity)
    if quad is None:
        return None
    desc = [0, 0, 0, 0]
    if inner:
        desc = [1, 1, 1, 1]
        desc[quad] = 0
    else:
        desc[quad] = 1
    return tuple(desc)


def _similarity_from_two(a1, a2, b1, b2):
    va = a2 - a1
    vb = b2 - b1
    la = np.linalg.norm(va)
    if la < 1e-9:
        return None
    s = np.linalg.norm(vb) / la
    theta = np.arctan2(vb[1], vb[0]) - np.arctan2(va[1], va[0])
    r = _rot(theta)
    t = b1 - s * (r @ a1)
    return s, theta, t[0], t[1]


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _apply(tf, pts):
    s, theta, tx, ty = tf
    return s * (pts @ _rot(theta).T) + np.array([tx, ty])


def _refine_similarity(a, b):
    """Least-squares 4-DoF similarity a -> b."""
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    aa = a - mu_a
    bb = b - mu_b
    dot = float(np.sum(aa * bb))
    crs = float(np.sum(aa[:, 0] * bb[:, 1] - aa[:, 1] * bb[:, 0]))
    theta = np.arctan2(crs, dot)
    denom = float(np.sum(aa * aa))
    if denom < 1e-12:
        return None
    s = (np.cos(theta) * dot + np.sin(theta) * crs) / denom
    t = mu_b - s * (_rot(theta) @ mu_a)
    return s, theta, t[0], t[1]


def match(candidates, priors, rng=None, radius: float = PRIOR_RADIUS_PX,
          ransac_thresh: float = RANSAC_THRESH_PX,
          max_translation: float = MAX_TRANSLATION_PX,
          max_samples: int = 64) -> MatchResult:
    """Associate candidates with priors and fit the similarity transform.

    Putative pairs need identical descriptors and a distance below
    ``radius``; assignment is greedy nearest-first, one candidate per
    prior.  With two or more pairs a RANSAC similarity (exhaustive over
    pair combinations up to ``max_samples``, then seeded random) selects
    the inliers; the refined solution is rejected wholesale when its
    translation exceeds ``max_translation`` in either direction.  With
    fewer than two pairs, only descriptor-unique pairs pass through.
    """
    pairs = _greedy_pairs(candidates, priors, radius)
    if len(pairs) < 2:
        unique = _unique_descriptor_pairs(pairs, candidates, priors)
        return MatchResult(matches=unique, transform=None)

    a = np.array([p.px for p, _ in pairs])
    b = np.array([c.px for _, c in pairs])
    n = len(pairs)
    combos = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if len(combos) > max_samples:
        if rng is None or not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        idx = rng.choice(len(combos), size=max_samples, replace=False)
        combos = [combos[k] for k in idx]

    best_inl, best_count = None, 0
    for i, j in combos:
        tf = _similarity_from_two(a[i], a[j], b[i], b[j])
        if tf is None or not 0.2 < tf[0] < 5.0:
            continue
        err = np.linalg.norm(_apply(tf, a) - b, axis=1)
        inl = err <= ransac_thresh
        if inl.sum() > best_count:
            best_count, best_inl = int(inl.sum()), inl
    if best_inl is None:
        unique = _unique_descriptor_pairs(pairs, candidates, priors)
        return MatchResult(matches=unique, transform=None)

    tf = _refine_similarity(a[best_inl], b[best_inl])
    if tf is None:
        return MatchResult()
    # re-evaluate inliers under the refined transform
    err = np.linalg.norm(_apply(tf, a) - b, axis=1)
    inl = err <= ransac_thresh
    if inl.sum() >= 2:
        tf2 = _refine_similarity(a[inl], b[inl])
        if tf2 is not None:
            tf = tf2
            err = np.linalg.norm(_apply(tf, a) - b, axis=1)
            inl = err <= ransac_thresh
    if abs(tf[2]) > max_translation or abs(tf[3]) > max_translation:
        return MatchResult(rejected=True)
    matches = [CornerMatch(p, c, True) for (p, c), ok in zip(pairs, inl) if ok]
    return MatchResult(matches=matches, transform=tf)


def _greedy_pairs(candidates, priors, radius):
    scored = []
    for pi, prior in enumerate(priors):
        for ci, cand in enumerate(candidates):
            if prior.descriptor != cand.descriptor:
                continue
            d = float(np.linalg.norm(prior.px - cand.px))
            if d <= radius:
                scored.append((d, pi, ci))
    scored.sort()
    used_p, used_c = set(), set()
    pairs = []
    for _, pi, ci in scored:
        if pi in used_p or ci in used_c:
            continue
        used_p.add(pi)
        used_c.add(ci)
        pairs.append((priors[pi], candidates[ci]))
    return pairs


def _unique_descriptor_pairs(pairs, candidates, priors):
    from collections import Counter

    c_desc = Counter(c.descriptor for c in candidates)
    p_desc = Counter(p.descriptor for p in priors)
    return [
        CornerMatch(p, c, True)
        for p, c in pairs
        if c_desc[c.descriptor] == 1 and p_desc[p.descriptor] == 1
    ]
