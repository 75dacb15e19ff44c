"""Route an ideal waypoint path through a track and report the events.

Usage: python3 scripts/validate_track.py <track-file>
"""

import sys

import numpy as np

from gatepilot.dynamics import QuadState
from gatepilot.track import check_transition, load_track


def waypoints(gmap):
    pts = [np.asarray(gmap.start, dtype=float) + np.array([0.0, 0.0, -1.5])]
    for _ in range(gmap.laps):
        for g in gmap.gates:
            x_g, _, _ = g.axes()
            pts.append(g.center - 2.0 * x_g)
            pts.append(g.center + 2.0 * x_g)
    return pts


def densify(pts, step=0.08):
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(2, int(np.ceil(np.linalg.norm(b - a) / step)))
        for t in np.linspace(0, 1, n)[1:]:
            out.append(a + t * (b - a))
    return out


def main(path):
    gmap = load_track(path)
    pts = densify(waypoints(gmap))
    target = 0
    passes = 0
    st_prev = QuadState.rest(p=pts[0])
    for p in pts[1:]:
        st_next = QuadState.rest(p=p)
        st_next.v = (st_next.p - st_prev.p) / 0.01
        ev = check_transition(st_prev, st_next, gmap, target)
        if ev is not None:
            if ev.kind == "gate_passed":
                passes += 1
                target = (target + 1) % len(gmap.gates)
                print(f"pass gate {ev.gate_idx} offset {ev.offset:.3f}")
            else:
                print(f"UNEXPECTED {ev.kind} gate {ev.gate_idx} at {st_next.p}")
                return 1
        st_prev = st_next
    want = gmap.total_passes()
    print(f"passes: {passes} expected {want}")
    return 0 if passes == want else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))
