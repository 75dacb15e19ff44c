"""Delay-compensated sensor fusion by rewind and replay.

Camera frames arrive with transport/processing latency (about 17 ms
here) while IMU samples are nearly fresh (0.5 ms), so a pose measurement
refers to a state several IMU samples in the past.  The engine keeps a
snapshot of the filter at the last fused measurement plus a buffer of
newer IMU samples.  On a measurement it rewinds to the capture time,
fuses there, re-anchors the snapshot and replays the buffered IMU to
produce the fresh low-latency head state that the controller consumes.

``naive=True`` reproduces the baseline that fuses each measurement
against the newest state at its arrival time, with no rewind.
"""

from dataclasses import dataclass

import numpy as np

from . import ekf
from .ekf import EkfConfig, EkfState


@dataclass
class _ImuEntry:
    t: float
    u: np.ndarray
    inflate: bool


class DelayedFusion:
    """Single-writer fusion engine over one EKF state stream."""

    def __init__(self, initial: EkfState, cfg: EkfConfig = None,
                 naive: bool = False, horizon: float = 0.5):
        self.cfg = cfg or EkfConfig()
        self.naive = naive
        self.horizon = horizon
        self.snapshot = initial.copy()
        self.head = initial.copy()
        self.buffer: list = []
        self.dropped = 0
        self.rejected = 0
        self.fused = 0

    def on_imu(self, t: float, u, inflate: bool = False) -> EkfState:
        """Advance the head with one IMU sample stamped ``t``."""
        u = np.asarray(u, dtype=np.float64)
        if t <= self.head.t:
            self.dropped += 1
            return self.head
        self.buffer.append(_ImuEntry(t, u, inflate))
        self.head = ekf.predict(self.head, u, t - self.head.t, self.cfg,
                                inflate)
        return self.head

    def on_measurement(self, meas, accept_att: bool) -> EkfState:
        """Fuse a pose measurement stamped ``meas.timestamp``.

        In compensated mode the filter rewinds to the capture time and
        replays buffered IMU afterwards; in naive mode the measurement is
        applied to the current head as if it were fresh.
        """
        if self.naive:
            self.head, ok, _ = ekf.update(self.head, meas, accept_att, self.cfg)
            self.rejected += 0 if ok else 1
            self.fused += 1 if ok else 0
            return self.head

        t_m = meas.timestamp
        if t_m < self.snapshot.t:
            self.dropped += 1
            return self.head
        state = self.snapshot.copy()
        consumed = 0
        for entry in self.buffer:
            if entry.t <= t_m:
                state = ekf.predict(state, entry.u, entry.t - state.t,
                                    self.cfg, entry.inflate)
                consumed += 1
            else:
                # partial interval up to the capture instant
                if t_m > state.t:
                    state = ekf.predict(state, entry.u, t_m - state.t,
                                        self.cfg, entry.inflate)
                break
        state.t = t_m
        state, ok, _ = ekf.update(state, meas, accept_att, self.cfg)
        self.rejected += 0 if ok else 1
        self.fused += 1 if ok else 0
        # re-anchor and replay the remaining buffered samples
        self.snapshot = state.copy()
        self.buffer = self.buffer[consumed:]
        head = state
        for entry in self.buffer:
            if entry.t > head.t:
                head = ekf.predict(head, entry.u, entry.t - head.t,
                                   self.cfg, entry.inflate)
        self.head = head
        self._prune()
        return self.head

    def _prune(self):
        cutoff = self.head.t - self.horizon
        while self.buffer and self.buffer[0].t < min(cutoff, self.snapshot.t):
            self.buffer.pop(0)
