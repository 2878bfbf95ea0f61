"""Velocity-threshold (I-VT) saccade and fixation segmentation.

A sample whose angular velocity exceeds ``v_detect`` is a detection point.
From there the scan runs backward while velocity stays above ``v_start`` and
forward while it stays above ``v_final``; the first sub-threshold sample on
each side bounds the saccade.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import px_to_deg
from .stream import GazeStream


@dataclass(frozen=True)
class IvtThresholds:
    v_detect: float = 100.0
    v_start: float = 60.0
    v_final: float = 60.0

    def __post_init__(self):
        if not (self.v_start > 0 and self.v_final > 0):
            raise ValueError("v_start and v_final must be > 0")
        if self.v_detect < self.v_start or self.v_detect < self.v_final:
            raise ValueError("v_detect must be >= v_start and >= v_final")


@dataclass(frozen=True, eq=False)
class Saccade:
    t: np.ndarray  # ms, shape (m,)
    xy: np.ndarray  # px, shape (m, 2)
    start_idx: int
    end_idx: int

    def __post_init__(self):
        if len(self.t) < 3:
            raise ValueError("a saccade needs at least 3 samples")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("saccade timestamps must be strictly increasing")

    @property
    def onset_t(self) -> float:
        return float(self.t[0])

    @property
    def offset_t(self) -> float:
        return float(self.t[-1])

    @property
    def start(self) -> np.ndarray:
        return self.xy[0]

    @property
    def end(self) -> np.ndarray:
        return self.xy[-1]

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_points(cls, xy, dt_ms: float = 1000.0 / 300, t0: float = 0.0) -> "Saccade":
        """Build a saccade from a bare trajectory; handy for tests and tooling."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        t = t0 + dt_ms * np.arange(len(xy))
        return cls(t, xy, 0, len(xy) - 1)


@dataclass(frozen=True)
class Fixation:
    start_idx: int
    end_idx: int  # inclusive
    start_t: float
    end_t: float
    centroid: tuple

    @property
    def mid_t(self) -> float:
        return 0.5 * (self.start_t + self.end_t)


def sample_velocity(stream: GazeStream) -> np.ndarray:
    """Per-sample angular velocity in deg/s; NaN where it cannot be computed.

    Central difference when both neighbours are valid, one-sided otherwise.
    """
    n = len(stream)
    vel = np.full(n, np.nan)
    if n < 2:
        return vel
    t, xy, valid = stream.t, stream.xy, stream.valid
    prev_i = np.arange(n) - 1
    next_i = np.arange(n) + 1
    has_prev = np.zeros(n, bool)
    has_next = np.zeros(n, bool)
    has_prev[1:] = valid[:-1] & valid[1:]
    has_next[:-1] = valid[1:] & valid[:-1]
    lo = np.where(has_prev, prev_i, np.arange(n))
    hi = np.where(has_next, next_i, np.arange(n))
    ok = valid & (hi > lo)
    lo, hi = lo[ok], hi[ok]
    dist = np.hypot(*(xy[hi] - xy[lo]).T)
    vel[ok] = px_to_deg(dist, stream.geom) / ((t[hi] - t[lo]) / 1000.0)
    return vel


def _velocity_events(vel: np.ndarray, thr: IvtThresholds) -> list[tuple[int, int, bool]]:
    """(start, end, clean) index spans of every detected velocity event.

    ``clean`` is False when a scan ran into an uncomputable sample or the
    stream boundary.
    """
    n = len(vel)
    above_detect = np.flatnonzero(np.nan_to_num(vel, nan=-np.inf) > thr.v_detect)
    events: list[list] = []
    pos = 0
    for d in above_detect:
        if d < pos:
            continue
        clean = True
        s = d
        while s > 0 and vel[s] > thr.v_start:
            s -= 1
        if np.isnan(vel[s]) or vel[s] > thr.v_start:
            clean = False
        e = d
        while e < n - 1 and vel[e] > thr.v_final:
            e += 1
        if np.isnan(vel[e]) or vel[e] > thr.v_final:
            clean = False
        if events and s <= events[-1][1]:
            events[-1][1] = max(events[-1][1], e)
            events[-1][2] = events[-1][2] and clean
        else:
            events.append([s, e, clean])
        pos = e + 1
    return [tuple(ev) for ev in events]


def segment(
    stream: GazeStream,
    thr: IvtThresholds = IvtThresholds(),
    min_duration_ms: float = 10.0,
    min_amplitude_deg: float = 0.5,
    min_fixation_ms: float = 60.0,
) -> tuple[list[Saccade], list[Fixation]]:
    """Split a preprocessed stream into saccades and the fixations between them."""
    n = len(stream)
    if n == 0:
        return [], []
    vel = sample_velocity(stream)
    events = _velocity_events(vel, thr)
    t, xy, valid = stream.t, stream.xy, stream.valid

    saccades = []
    for s, e, clean in events:
        if not clean or not valid[s : e + 1].all() or e - s + 1 < 3:
            continue
        if t[e] - t[s] < min_duration_ms:
            continue
        amp = px_to_deg(float(np.hypot(*(xy[e] - xy[s]))), stream.geom)
        if amp < min_amplitude_deg:
            continue
        saccades.append(Saccade(t[s : e + 1].copy(), xy[s : e + 1].copy(), int(s), int(e)))

    # every velocity event, kept or not, separates fixations
    busy = np.zeros(n, dtype=bool)
    for s, e, _ in events:
        busy[s : e + 1] = True
    free = valid & ~busy
    fixations = []
    padded = np.concatenate([[False], free, [False]])
    edges = np.diff(padded.astype(np.int8))
    for a, b in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)):
        if t[b - 1] - t[a] < min_fixation_ms:
            continue
        c = xy[a:b].mean(axis=0)
        fixations.append(Fixation(int(a), int(b - 1), float(t[a]), float(t[b - 1]), (float(c[0]), float(c[1]))))
    return saccades, fixations


class IVTSegmenter:
    """Configured I-VT segmenter; ``segment(stream)`` returns (saccades, fixations)."""

    def __init__(self, v_detect=100.0, v_start=60.0, v_final=60.0,
                 min_duration_ms=10.0, min_amplitude_deg=0.5, min_fixation_ms=60.0):
        self.thresholds = IvtThresholds(v_detect, v_start, v_final)
        self.min_duration_ms = min_duration_ms
        self.min_amplitude_deg = min_amplitude_deg
        self.min_fixation_ms = min_fixation_ms

    def segment(self, stream: GazeStream):
        return segment(stream, self.thresholds, self.min_duration_ms,
                       self.min_amplitude_deg, self.min_fixation_ms)
