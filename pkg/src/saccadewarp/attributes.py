"""Saccade attributes used for selection, including two curvature measures."""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import Optional

import numpy as np

from .geometry import ScreenGeometry, px_to_deg
from .segmentation import Saccade
from .stream import StimulusLog

ATTRIBUTE_NAMES = (
    "curvature_area",
    "curvature_angle",
    "amplitude",
    "length",
    "direction",
    "turns",
    "velocity_mean",
    "velocity_max",
    "latency_ms",
    "duration_ms",
)
LATENCY_INDEX = ATTRIBUTE_NAMES.index("latency_ms")


@dataclass(frozen=True)
class SaccadeAttributes:
    curvature_area: float
    curvature_angle: float
    amplitude: float
    length: float
    direction: float
    turns: int
    velocity_mean: float
    velocity_max: float
    latency_ms: Optional[float]
    duration_ms: float

    def as_array(self) -> np.ndarray:
        """Feature vector in ``ATTRIBUTE_NAMES`` order; missing latency is NaN."""
        return np.array([np.nan if v is None else float(v) for v in astuple(self)])

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _chord(xy: np.ndarray) -> tuple[np.ndarray, float]:
    chord = xy[-1] - xy[0]
    length = math.hypot(chord[0], chord[1])
    if length == 0:
        raise ValueError("degenerate saccade: start and end coincide")
    return chord / length, length


def curvature_area(s) -> float:
    """Trapezoid-sum area between the trajectory and its start-end chord (px^2)."""
    xy = s.xy if isinstance(s, Saccade) else np.asarray(s, float)
    if len(xy) < 3:
        raise ValueError("need at least 3 points")
    u, _ = _chord(xy)
    rel = xy - xy[0]
    along = rel @ u
    perp = np.abs(rel[:, 0] * u[1] - rel[:, 1] * u[0])
    return float(np.sum(0.5 * (perp[1:] + perp[:-1]) * np.abs(np.diff(along))))


def curvature_angle(s) -> float:
    """Mean unsigned angle (deg) at the start point between each sample and the end point.

    Normalised by the number of points ``m`` although only the ``m - 2``
    interior points contribute. Interior points coinciding with the start are
    skipped.
    """
    xy = s.xy if isinstance(s, Saccade) else np.asarray(s, float)
    m = len(xy)
    if m < 3:
        raise ValueError("need at least 3 points")
    _chord(xy)
    chord = xy[-1] - xy[0]
    rel = xy[1:-1] - xy[0]
    keep = np.any(rel != 0, axis=1)
    rel = rel[keep]
    cross = np.abs(rel[:, 0] * chord[1] - rel[:, 1] * chord[0])
    dot = rel @ chord
    return float(np.degrees(np.arctan2(cross, dot)).sum() / m)


def compute_attributes(
    s: Saccade, geom: ScreenGeometry, stimulus: Optional[StimulusLog] = None
) -> SaccadeAttributes:
    xy, t = s.xy, s.t
    steps = np.diff(xy, axis=0)
    step_len = np.hypot(steps[:, 0], steps[:, 1])
    chord = xy[-1] - xy[0]

    moving = steps[step_len > 0]
    if len(moving) > 1:
        dots = np.einsum("ij,ij->i", moving[:-1], moving[1:])
        crosses = moving[:-1, 0] * moving[1:, 1] - moving[:-1, 1] * moving[1:, 0]
        turns = int(np.count_nonzero(np.degrees(np.abs(np.arctan2(crosses, dots))) > 90.0))
    else:
        turns = 0

    step_vel = px_to_deg(step_len, geom) / (np.diff(t) / 1000.0)
    direction = math.degrees(math.atan2(chord[1], chord[0]))
    if direction >= 180.0:
        direction -= 360.0

    latency = None
    if stimulus is not None:
        vanish = stimulus.last_vanish_before(s.onset_t)
        if vanish is not None:
            latency = s.onset_t - vanish

    return SaccadeAttributes(
        curvature_area=curvature_area(s),
        curvature_angle=curvature_angle(s),
        amplitude=float(math.hypot(chord[0], chord[1])),
        length=float(step_len.sum()),
        direction=direction,
        turns=turns,
        velocity_mean=float(step_vel.mean()),
        velocity_max=float(step_vel.max()),
        latency_ms=latency,
        duration_ms=s.offset_t - s.onset_t,
    )


def attribute_matrix(saccades, geom: ScreenGeometry, stimulus: Optional[StimulusLog] = None) -> np.ndarray:
    """Stack attribute vectors into an (n, 10) array."""
    if not saccades:
        return np.empty((0, len(ATTRIBUTE_NAMES)))
    return np.vstack([compute_attributes(s, geom, stimulus).as_array() for s in saccades])
