"""Gaze stream container and the stimulus / session records built around it."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .geometry import DEFAULT_GEOMETRY, ScreenGeometry


class GazeSample(NamedTuple):
    t: float
    x: float
    y: float
    valid: bool


@dataclass(frozen=True, eq=False)
class GazeStream:
    """Timestamped on-screen gaze samples.

    ``t`` is in milliseconds, ``xy`` in pixels with shape (n, 2). Invalid
    samples are flagged through ``valid``; their coordinates are not trusted
    but are never NaN.
    """

    t: np.ndarray
    xy: np.ndarray
    valid: np.ndarray
    rate_hz: float = 300.0
    geom: ScreenGeometry = DEFAULT_GEOMETRY

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if not (len(t) == len(xy) == len(valid)):
            raise ValueError("t, xy and valid must have the same length")
        if not np.all(np.isfinite(t)):
            raise ValueError("timestamps must be finite")
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be > 0")
        if len(t) > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("timestamps must be strictly increasing")
            nominal = 1000.0 / self.rate_hz
            if abs(np.median(dt) - nominal) > 0.1 * nominal:
                raise ValueError(
                    f"median sample interval {np.median(dt):.3f} ms does not match rate {self.rate_hz} Hz"
                )
        xy = np.where(np.isfinite(xy), xy, 0.0)
        for arr in (t, xy, valid):
            arr.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "valid", valid)

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for t, (x, y), v in zip(self.t, self.xy, self.valid):
            yield GazeSample(float(t), float(x), float(y), bool(v))

    @property
    def dt_ms(self) -> float:
        return 1000.0 / self.rate_hz

    def with_data(self, xy=None, valid=None) -> "GazeStream":
        return replace(
            self,
            xy=self.xy.copy() if xy is None else xy,
            valid=self.valid.copy() if valid is None else valid,
        )

    def equals(self, other: "GazeStream") -> bool:
        return (
            self.rate_hz == other.rate_hz
            and self.geom == other.geom
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.xy, other.xy)
            and np.array_equal(self.valid, other.valid)
        )

    @classmethod
    def from_arrays(cls, t, x, y, valid=None, rate_hz=300.0, geom=DEFAULT_GEOMETRY) -> "GazeStream":
        xy = np.column_stack([np.asarray(x, float), np.asarray(y, float)])
        if valid is None:
            valid = np.ones(len(xy), dtype=bool)
        return cls(np.asarray(t, float), xy, valid, rate_hz, geom)


@dataclass(frozen=True)
class StimulusEvent:
    t: float
    kind: str  # "appear" | "vanish"
    x: float
    y: float
    row: int
    col: int


@dataclass(frozen=True)
class TargetEpoch:
    appear_t: float
    vanish_t: float
    x: float
    y: float
    row: int
    col: int


@dataclass(frozen=True)
class StimulusLog:
    events: tuple

    def __post_init__(self):
        events = tuple(sorted(self.events, key=lambda e: e.t))
        for e in events:
            if e.kind not in ("appear", "vanish"):
                raise ValueError(f"unknown event kind {e.kind!r}")
        object.__setattr__(self, "events", events)
        self.epochs()  # validates appear/vanish pairing

    def epochs(self) -> list[TargetEpoch]:
        """Pair appear/vanish events into target presentation intervals."""
        open_: dict = {}
        out = []
        for e in self.events:
            key = (e.row, e.col)
            if e.kind == "appear":
                if key in open_:
                    raise ValueError(f"target {key} appears twice without vanishing")
                open_[key] = e
            else:
                if key not in open_:
                    raise ValueError(f"target {key} vanishes before appearing")
                a = open_.pop(key)
                out.append(TargetEpoch(a.t, e.t, a.x, a.y, a.row, a.col))
        out.sort(key=lambda ep: ep.appear_t)
        return out

    def vanish_times(self) -> np.ndarray:
        return np.array([e.t for e in self.events if e.kind == "vanish"], dtype=float)

    def last_vanish_before(self, t: float) -> Optional[float]:
        v = self.vanish_times()
        v = v[v <= t]
        return float(v.max()) if len(v) else None


@dataclass(frozen=True)
class TrueSaccade:
    """Ground-truth saccade emitted by the simulator."""

    onset_t: float
    offset_t: float
    start: tuple
    end: tuple
    curved: bool
    bump_px: float = 0.0


@dataclass(eq=False)
class SessionRecord:
    stream: GazeStream
    stimulus: StimulusLog
    geom: ScreenGeometry = DEFAULT_GEOMETRY
    truth_stream: Optional[GazeStream] = None
    distortion: Optional[object] = None
    pose_label: str = "none"
    session_id: str = "s0"
    participant_id: str = "p0"
    true_saccades: list = field(default_factory=list)
