"""Gate maps, gate-passing and collision events, episode initialization.

A gate is a square frame: inner opening ``inner_size``, outer square
``outer_size`` (2.7 m for the real gates), extruded ``thickness`` along
its normal.  The gate frame has x along the crossing direction (yaw
about world z), y in-plane horizontal, z in-plane down; corners sit on
the mid-plane of the thickness.

Events produced by :func:`check_transition` per simulation step:

- ``gate_passed``      forward crossing of the target gate's mid-plane
                       within the inner opening (non-terminal)
- ``gate_collision``   entering any gate's frame box, or crossing the
                       target plane outside the inner opening
- ``ground_collision`` below the ground margin while faster than the
                       ground-speed allowance
- ``out_of_bounds``    outside the arena box
- ``rate_limit``       any body-rate component beyond 1700 deg/s

Plane crossings are tested on the interpolated segment between two
consecutive states, so one 0.01 s step cannot tunnel through a gate.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import quat
from .dynamics import QuadState, motor_setpoint

RATE_LIMIT = np.deg2rad(1700.0)
TERMINAL_KINDS = frozenset(
    {"gate_collision", "ground_collision", "out_of_bounds", "rate_limit"}
)


@dataclass(eq=False)
class Gate:
    center: np.ndarray        # world, m
    yaw: float                # rad, heading of the crossing direction
    inner_size: float = 1.5
    outer_size: float = 2.7
    thickness: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if not 0.0 < self.inner_size < self.outer_size:
            raise ValueError("require 0 < inner_size < outer_size")
        if self.thickness <= 0.0:
            raise ValueError("require thickness > 0")

    def axes(self):
        """(x_g, y_g, z_g): crossing direction, in-plane horizontal, down."""
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return (np.array([c, s, 0.0]), np.array([-s, c, 0.0]),
                np.array([0.0, 0.0, 1.0]))

    def to_gate(self, p):
        """World point(s) -> gate-frame coordinates."""
        d = np.asarray(p, dtype=np.float64) - self.center
        x_g, y_g, z_g = self.axes()
        return np.stack([d @ x_g, d @ y_g, d @ z_g], axis=-1)

    def corners(self, inner=True, size=None):
        """The four corners (TL, TR, BR, BL as seen facing the gate from
        the front, i.e. looking along +x_g) on the mid-plane, world frame."""
        half = 0.5 * (size if size is not None
                      else (self.inner_size if inner else self.outer_size))
        _, y_g, z_g = self.axes()
        # image-like order: top-left, top-right, bottom-right, bottom-left
        offs = [(+half, -half), (-half, -half), (-half, +half), (+half, +half)]
        return np.array([self.center + y * y_g + z * z_g for y, z in offs])


@dataclass
class GateMap:
    gates: list
    laps: int = 1
    bounds: np.ndarray = None     # (3, 2) min/max per axis
    start: np.ndarray = None      # nominal ground-start position

    def __post_init__(self):
        if self.bounds is None:
            self.bounds = np.array([[1.0, 95.0], [-27.0, 1.0], [-5.0, 0.0]])
        self.bounds = np.asarray(self.bounds, dtype=np.float64)
        if self.start is None:
            self.start = np.array([8.0, -22.0, 0.0])
        self.start = np.asarray(self.start, dtype=np.float64)

    def __len__(self):
        return len(self.gates)

    def total_passes(self) -> int:
        return len(self.gates) * self.laps

    def in_bounds(self, p) -> bool:
        """x/y strictly inside the arena; z gets 0.5 m of slack so the
        floor is policed by the ground-collision rule, not this one."""
        p = np.asarray(p)
        if not (self.bounds[0, 0] <= p[0] <= self.bounds[0, 1]
                and self.bounds[1, 0] <= p[1] <= self.bounds[1, 1]):
            return False
        return bool(self.bounds[2, 0] - 0.5 <= p[2] <= self.bounds[2, 1] + 0.5)

    def with_inner_size(self, inner_size: float) -> "GateMap":
        """Copy with every gate's opening resized (training uses smaller
        openings than the real 1.5 m gates)."""
        gates = [Gate(g.center, g.yaw, inner_size, g.outer_size, g.thickness)
                 for g in self.gates]
        return GateMap(gates, self.laps, self.bounds.copy(), self.start.copy())


@dataclass(frozen=True)
class EpisodeEvent:
    kind: str
    gate_idx: int = -1
    offset: float = 0.0

    @property
    def terminal(self) -> bool:
        return self.kind in TERMINAL_KINDS


def _segment_hits_frame(g: Gate, p0, p1, samples: int = 32) -> bool:
    """Does the segment p0->p1 intersect the gate's frame box (the square
    annulus between inner and outer size, extruded by thickness)?"""
    a = g.to_gate(p0)
    b = g.to_gate(p1)
    half_t = 0.5 * g.thickness
    # clip the segment to the thickness slab |x| <= half_t
    dx = b[0] - a[0]
    t0, t1 = 0.0, 1.0
    if abs(dx) < 1e-12:
        if abs(a[0]) > half_t:
            return False
    else:
        ta = (-half_t - a[0]) / dx
        tb = (half_t - a[0]) / dx
        t0, t1 = max(0.0, min(ta, tb)), min(1.0, max(ta, tb))
        if t0 > t1:
            return False
    ts = np.linspace(t0, t1, samples)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    m = np.maximum(np.abs(pts[:, 1]), np.abs(pts[:, 2]))
    return bool(np.any((m >= 0.5 * g.inner_size) & (m <= 0.5 * g.outer_size)))


def check_transition(prev: QuadState, next_state: QuadState, gmap: GateMap,
                     target_idx: int, h_ground: float = 0.0,
                     v_ground: float = 2.0):
    """Classify one simulation step; returns an EpisodeEvent or None.

    Precedence: rate limit, out of bounds, ground, frame boxes (all
    gates), then the target-plane crossing test.
    """
    if np.any(np.abs(next_state.Omega) > RATE_LIMIT):
        return EpisodeEvent("rate_limit")
    # below the ground margin while moving faster than the allowance
    if next_state.p[2] > -h_ground and np.linalg.norm(next_state.v) > v_ground:
        return EpisodeEvent("ground_collision")
    if not gmap.in_bounds(next_state.p):
        return EpisodeEvent("out_of_bounds")
    for i, g in enumerate(gmap.gates):
        if _segment_hits_frame(g, prev.p, next_state.p):
            return EpisodeEvent("gate_collision", gate_idx=i)
    g = gmap.gates[target_idx % len(gmap.gates)]
    a = g.to_gate(prev.p)
    b = g.to_gate(next_state.p)
    if a[0] < 0.0 <= b[0]:  # forward crossing of the mid-plane
        t = a[0] / (a[0] - b[0])
        cross = a + t * (b - a)
        off = float(np.hypot(cross[1], cross[2]))
        if max(abs(cross[1]), abs(cross[2])) <= 0.5 * g.inner_size:
            return EpisodeEvent("gate_passed", gate_idx=target_idx % len(gmap.gates),
                                offset=off)
        return EpisodeEvent("gate_collision",
                            gate_idx=target_idx % len(gmap.gates), offset=off)
    return None


def nearest_gate_ahead(gmap: GateMap, p) -> int:
    """Nearest gate whose plane the position is behind; wraps to gate 0
    when the position is ahead of every plane."""
    best, best_d = None, np.inf
    for i, g in enumerate(gmap.gates):
        rel = g.to_gate(p)
        if rel[0] < 0.0:
            d = float(np.linalg.norm(rel))
            if d < best_d:
                best, best_d = i, d
    return 0 if best is None else best


def init_ground(rng, gmap: GateMap, params=None):
    """Ground start near the nominal point, pointing roughly at gate 1.

    Returns (state, target_idx, u0).
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    xy = gmap.start[:2] + rng.uniform(-0.5, 0.5, 2)
    psi = gmap.gates[0].yaw + rng.uniform(-np.pi / 4, np.pi / 4)
    u0 = np.zeros(4)
    par = params
    if par is None:
        from .params import ModelParams

        par = ModelParams()
    state = QuadState(
        p=np.array([xy[0], xy[1], gmap.start[2]]),
        v=np.zeros(3),
        q=quat.from_euler(0.0, 0.0, psi),
        Omega=np.zeros(3),
        omega=motor_setpoint(u0, par),
    )
    return state, 0, u0


def init_uniform(rng, gmap: GateMap, params=None):
    """Uniform start anywhere in the arena; target is the nearest gate
    located ahead.  Returns (state, target_idx, u0_raw).

    The raw command sample spans (-1, 1); motor speeds are set to the
    steady state of the clamped command while the raw value is kept for
    the observation.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    b = gmap.bounds
    pos = rng.uniform(b[:, 0], b[:, 1])
    vel = rng.uniform(-0.5, 0.5, 3)
    roll, pitch = rng.uniform(-np.pi / 9, np.pi / 9, 2)
    psi = rng.uniform(-np.pi, np.pi)
    rates = rng.uniform(-0.1, 0.1, 3)
    u0 = rng.uniform(-1.0, 1.0, 4)
    par = params
    if par is None:
        from .params import ModelParams

        par = ModelParams()
    state = QuadState(
        p=pos, v=vel, q=quat.from_euler(roll, pitch, psi),
        Omega=rates, omega=motor_setpoint(u0, par),
    )
    return state, nearest_gate_ahead(gmap, pos), u0


def load_track(path) -> GateMap:
    """Read a gate-table track file.

    Data rows: ``id x y z yaw_deg inner_m outer_m thickness_m``.
    Header comments may carry ``# bounds: x0 x1 y0 y1 z0 z1``,
    ``# laps: n`` and ``# start: x y z``.
    """
    bounds = None
    laps = 1
    start = None
    gates = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if ":" in body:
                key, _, val = body.partition(":")
                key = key.strip().lower()
                if key == "bounds":
                    v = [float(t) for t in val.split()]
                    bounds = np.array(v).reshape(3, 2)
                elif key == "laps":
                    laps = int(val)
                elif key == "start":
                    start = np.array([float(t) for t in val.split()])
            continue
        parts = stripped.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{lineno}: expected 8 columns, got {len(parts)}")
        _, x, y, z, yaw_deg, inner, outer, thick = (float(t) for t in parts)
        gates.append(Gate(np.array([x, y, z]), np.deg2rad(yaw_deg),
                          inner, outer, thick))
    if not gates:
        raise ValueError(f"{path}: no gates")
    return GateMap(gates, laps=laps, bounds=bounds, start=start)


def save_track(gmap: GateMap, path):
    lines = [
        "# gates: id x y z yaw_deg inner_m outer_m thickness_m",
        "# bounds: " + " ".join(f"{v:g}" for v in gmap.bounds.ravel()),
        f"# laps: {gmap.laps}",
        "# start: " + " ".join(f"{v:g}" for v in gmap.start),
    ]
    for i, g in enumerate(gmap.gates, 1):
        lines.append(
            f"{i} {g.center[0]:g} {g.center[1]:g} {g.center[2]:g} "
            f"{np.rad2deg(g.yaw):g} {g.inner_size:g} {g.outer_size:g} {g.thickness:g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def desk_track_path() -> Path:
    return Path(__file__).parent / "data" / "track_desk.txt"


def arena_track_path() -> Path:
    return Path(__file__).parent / "data" / "track_arena.txt"
