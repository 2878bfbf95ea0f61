"""Screen geometry and pixel / visual-angle conversions.

Coordinates are screen pixels with the origin at the top-left corner,
x growing rightward and y growing downward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScreenGeometry:
    width_px: int
    height_px: int
    width_mm: float
    height_mm: float
    viewing_distance_mm: float

    def __post_init__(self):
        for name in ("width_px", "height_px", "width_mm", "height_mm", "viewing_distance_mm"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def mm_per_px(self) -> float:
        # anisotropic pixels are averaged
        return 0.5 * (self.width_mm / self.width_px + self.height_mm / self.height_px)

    @property
    def size(self) -> tuple[int, int]:
        return self.width_px, self.height_px

    def to_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "width_mm": self.width_mm,
            "height_mm": self.height_mm,
            "viewing_distance_mm": self.viewing_distance_mm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScreenGeometry":
        return cls(
            width_px=int(d["width_px"]),
            height_px=int(d["height_px"]),
            width_mm=float(d["width_mm"]),
            height_mm=float(d["height_mm"]),
            viewing_distance_mm=float(d["viewing_distance_mm"]),
        )


# 30-inch 2560x1600 monitor, 640x400 mm, viewed from 750 mm.
DEFAULT_GEOMETRY = ScreenGeometry(2560, 1600, 640.0, 400.0, 750.0)


def px_to_deg(distance_px, geom: ScreenGeometry):
    """Visual angle (degrees) subtended by a distance centred on the screen.

    Works on scalars and arrays. Uses ``2 * atan(d_mm / (2 * D))``.
    """
    d = np.asarray(distance_px, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("distance must be finite")
    if np.any(d < 0):
        raise ValueError("distance must be >= 0")
    deg = np.degrees(2.0 * np.arctan(d * geom.mm_per_px / (2.0 * geom.viewing_distance_mm)))
    return float(deg) if deg.ndim == 0 else deg


def deg_to_px(angle_deg, geom: ScreenGeometry):
    """Inverse of :func:`px_to_deg`."""
    a = np.asarray(angle_deg, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("angle must be finite")
    d = 2.0 * geom.viewing_distance_mm * np.tan(np.radians(a) / 2.0) / geom.mm_per_px
    return float(d) if d.ndim == 0 else d


def angular_velocity(p_a, p_b, dt: float, geom: ScreenGeometry) -> float:
    """Angular speed in deg/s between two points sampled ``dt`` seconds apart."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    dist = math.hypot(p_b[0] - p_a[0], p_b[1] - p_a[1])
    return px_to_deg(dist, geom) / dt
