"""Undistortion of the gaze plane by straightening saccade trajectories.

Each selected saccade contributes point pairs (observed sample, its
projection onto a straight line). A rigid moving-least-squares deformation
driven by those pairs is evaluated on a regular vertex grid, box-filtered
against fold-back, and applied to gaze points by bilinear interpolation.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import DEFAULT_GEOMETRY, ScreenGeometry
from .segmentation import Saccade

SCHEMA_VERSION = "1.0"


class ProjectionMode(str, enum.Enum):
    BOTTOM = "bottom"
    PEAK = "peak"
    MIDDLE = "middle"

    @classmethod
    def parse(cls, value) -> "ProjectionMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True, eq=False)
class PointPairSet:
    """Control point pairs: ``src[i]`` (observed) should move to ``dst[i]``."""

    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.src, float).reshape(-1, 2)
        dst = np.asarray(self.dst, float).reshape(-1, 2)
        if src.shape != dst.shape:
            raise ValueError("src and dst must have the same shape")
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
            raise ValueError("point pairs must be finite")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    def __len__(self):
        return len(self.src)

    @classmethod
    def concat(cls, sets: Iterable["PointPairSet"]) -> "PointPairSet":
        sets = list(sets)
        if not sets:
            return cls(np.empty((0, 2)), np.empty((0, 2)))
        return cls(np.vstack([s.src for s in sets]), np.vstack([s.dst for s in sets]))


def extract_pairs(s: Saccade, mode=ProjectionMode.MIDDLE) -> PointPairSet:
    """Pair every trajectory sample with its foot on a straight target line.

    The target line is the start-end chord shifted along the chord normal by
    0 (bottom), the peak deviation (peak) or half of it (middle). The peak is
    the signed deviation of largest magnitude.
    """
    mode = ProjectionMode.parse(mode)
    xy = s.xy if isinstance(s, Saccade) else np.asarray(s, float)
    if len(xy) < 3:
        raise ValueError("need at least 3 points")
    chord = xy[-1] - xy[0]
    length = math.hypot(chord[0], chord[1])
    if length == 0:
        raise ValueError("degenerate saccade: start and end coincide")
    normal = np.array([-chord[1], chord[0]]) / length
    dev = (xy - xy[0]) @ normal
    peak = dev[np.argmax(np.abs(dev))]
    shift = {ProjectionMode.BOTTOM: 0.0, ProjectionMode.PEAK: peak, ProjectionMode.MIDDLE: 0.5 * peak}[mode]
    dst = xy + (shift - dev)[:, None] * normal
    return PointPairSet(xy.copy(), dst)


def _rotation(dot, cross, scale, rtol=1e-12):
    r = np.hypot(dot, cross)
    degenerate = ~(r > rtol * scale)
    r_safe = np.where(degenerate, 1.0, r)
    cos = np.where(degenerate, 1.0, dot / r_safe)
    sin = np.where(degenerate, 0.0, cross / r_safe)
    return cos, sin


def solve_mls_rigid(pairs: PointPairSet, v) -> np.ndarray:
    """Deform a single point ``v`` with rigid MLS, weights ``1 / |p_i - v|``.

    Reference implementation; :func:`mls_rigid_map` is the vectorised
    equivalent used for grids.
    """
    if len(pairs) == 0:
        raise ValueError("need at least one point pair")
    v = np.asarray(v, float)
    p, q = pairs.src, pairs.dst
    d = np.hypot(*(p - v).T)
    hit = d == 0
    if hit.any():
        return q[hit].mean(axis=0)
    w = 1.0 / d
    p_star = (w[:, None] * p).sum(0) / w.sum()
    q_star = (w[:, None] * q).sum(0) / w.sum()
    ph, qh = p - p_star, q - q_star
    dot = float(np.sum(w * (ph[:, 0] * qh[:, 0] + ph[:, 1] * qh[:, 1])))
    cross = float(np.sum(w * (ph[:, 0] * qh[:, 1] - ph[:, 1] * qh[:, 0])))
    scale = float(np.sum(w * np.hypot(*ph.T) * np.hypot(*qh.T)))
    c, s = _rotation(dot, cross, scale)
    rel = v - p_star
    return np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]]) + q_star


def mls_rigid_map(pairs: PointPairSet, points, chunk: int = 1024) -> np.ndarray:
    """Vectorised :func:`solve_mls_rigid` over an (n, 2) array of points."""
    if len(pairs) == 0:
        raise ValueError("need at least one point pair")
    pts = np.asarray(points, float).reshape(-1, 2)
    p, q = pairs.src, pairs.dst
    out = np.empty_like(pts)
    for a in range(0, len(pts), chunk):
        v = pts[a : a + chunk]
        dx = p[None, :, 0] - v[:, None, 0]
        dy = p[None, :, 1] - v[:, None, 1]
        d = np.hypot(dx, dy)
        hit = d == 0
        with np.errstate(divide="ignore"):
            w = np.where(hit, 0.0, 1.0 / np.where(hit, 1.0, d))
        wsum = w.sum(1)
        wsum = np.where(wsum > 0, wsum, 1.0)  # rows that hit a pair are overwritten below
        ps = np.column_stack([w @ p[:, 0], w @ p[:, 1]]) / wsum[:, None]
        qs = np.column_stack([w @ q[:, 0], w @ q[:, 1]]) / wsum[:, None]
        phx = p[None, :, 0] - ps[:, None, 0]
        phy = p[None, :, 1] - ps[:, None, 1]
        qhx = q[None, :, 0] - qs[:, None, 0]
        qhy = q[None, :, 1] - qs[:, None, 1]
        dot = np.sum(w * (phx * qhx + phy * qhy), 1)
        cross = np.sum(w * (phx * qhy - phy * qhx), 1)
        scale = np.sum(w * np.hypot(phx, phy) * np.hypot(qhx, qhy), 1)
        c, s = _rotation(dot, cross, scale)
        rx, ry = v[:, 0] - ps[:, 0], v[:, 1] - ps[:, 1]
        res = np.column_stack([c * rx - s * ry + qs[:, 0], s * rx + c * ry + qs[:, 1]])
        nhit = hit.sum(1)
        if nhit.any():
            rows = np.flatnonzero(nhit)
            for r in rows:
                res[r] = q[hit[r]].mean(axis=0)
        out[a : a + chunk] = res
    return out


# Additive-moment form. All sums are taken relative to the query vertex v with
# a = p - v, b = q - v, w = 1/|a|, so the moments of a union of pair sets are
# the sums of the per-set moments.
N_MOMENTS = 11


def mls_moments(pairs: PointPairSet, verts, chunk: int = 2048) -> np.ndarray:
    """Per-vertex rigid-MLS moments, shape (n_verts, 11)."""
    verts = np.asarray(verts, float).reshape(-1, 2)
    out = np.zeros((len(verts), N_MOMENTS))
    if len(pairs) == 0:
        return out
    p, q = pairs.src, pairs.dst
    for a0 in range(0, len(verts), chunk):
        v = verts[a0 : a0 + chunk]
        ax = p[None, :, 0] - v[:, None, 0]
        ay = p[None, :, 1] - v[:, None, 1]
        bx = q[None, :, 0] - v[:, None, 0]
        by = q[None, :, 1] - v[:, None, 1]
        d = np.hypot(ax, ay)
        hit = d == 0
        w = np.where(hit, 0.0, 1.0 / np.where(hit, 1.0, d))
        m = out[a0 : a0 + chunk]
        m[:, 0] = w.sum(1)
        m[:, 1] = (w * ax).sum(1)
        m[:, 2] = (w * ay).sum(1)
        m[:, 3] = (w * bx).sum(1)
        m[:, 4] = (w * by).sum(1)
        m[:, 5] = (w * (ax * bx + ay * by)).sum(1)
        m[:, 6] = (w * (ax * by - ay * bx)).sum(1)
        m[:, 7] = (w * d * np.hypot(bx, by)).sum(1)
        m[:, 8] = hit.sum(1)
        m[:, 9] = np.where(hit, bx, 0.0).sum(1)
        m[:, 10] = np.where(hit, by, 0.0).sum(1)
    return out


def moments_to_displacement(m: np.ndarray) -> np.ndarray:
    """Displacement f(v) - v from accumulated moments; zero where no pairs."""
    W = m[:, 0]
    empty = (W == 0) & (m[:, 8] == 0)
    Ws = np.where(W > 0, W, 1.0)
    ax, ay = m[:, 1] / Ws, m[:, 2] / Ws
    bx, by = m[:, 3] / Ws, m[:, 4] / Ws
    dot = m[:, 5] - (m[:, 1] * m[:, 3] + m[:, 2] * m[:, 4]) / Ws
    cross = m[:, 6] - (m[:, 1] * m[:, 4] - m[:, 2] * m[:, 3]) / Ws
    c, s = _rotation(dot, cross, m[:, 7], rtol=1e-9)
    disp = np.column_stack([-(c * ax - s * ay) + bx, -(s * ax + c * ay) + by])
    hit = m[:, 8] > 0
    if hit.any():
        disp[hit] = m[hit, 9:11] / m[hit, 8:9]
    disp[empty] = 0.0
    return disp


@dataclass(frozen=True, eq=False)
class WarpGrid:
    """Per-vertex displacement field over a regular grid."""

    origin: tuple
    quad_px: float
    dx: np.ndarray  # shape (ny, nx)
    dy: np.ndarray
    smoothing_kernel: int = 5
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        dx = np.asarray(self.dx, float)
        dy = np.asarray(self.dy, float)
        if dx.shape != dy.shape or dx.ndim != 2 or min(dx.shape) < 2:
            raise ValueError("dx and dy must be 2-D arrays of equal shape, at least 2x2")
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
            raise ValueError("displacements must be finite")
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def nx(self) -> int:
        return self.dx.shape[1]

    @property
    def ny(self) -> int:
        return self.dx.shape[0]

    def vertices(self) -> np.ndarray:
        """Vertex coordinates, shape (ny * nx, 2), row-major."""
        xs = self.origin[0] + self.quad_px * np.arange(self.nx)
        ys = self.origin[1] + self.quad_px * np.arange(self.ny)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def covers(self, geom: ScreenGeometry) -> bool:
        x1 = self.origin[0] + (self.nx - 1) * self.quad_px
        y1 = self.origin[1] + (self.ny - 1) * self.quad_px
        return (self.origin[0] <= 0 and self.origin[1] <= 0
                and x1 >= geom.width_px and y1 >= geom.height_px)

    def is_identity(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.dx) <= atol) and np.all(np.abs(self.dy) <= atol))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "quad_px": self.quad_px,
            "nx": self.nx,
            "ny": self.ny,
            "origin": list(self.origin),
            "dx": self.dx.tolist(),
            "dy": self.dy.tolist(),
            "smoothing_kernel": self.smoothing_kernel,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WarpGrid":
        _check_schema(d)
        dx = np.array(d["dx"], dtype=float)
        dy = np.array(d["dy"], dtype=float)
        if dx.shape != (d["ny"], d["nx"]):
            raise ValueError("dx shape does not match nx/ny")
        return cls(tuple(d["origin"]), float(d["quad_px"]), dx, dy,
                   int(d["smoothing_kernel"]), dict(d.get("source", {})))


def _check_schema(d: dict):
    version = str(d.get("schema_version", ""))
    if not version:
        raise ValueError("missing schema_version")
    major = int(version.split(".")[0])
    if major > int(SCHEMA_VERSION.split(".")[0]):
        raise ValueError(f"unsupported schema_version {version}")


def grid_layout(geom: ScreenGeometry, quad_px: float = 25) -> tuple[tuple, int, int]:
    """Origin and vertex counts covering the screen plus one quad on every side."""
    nx = int(math.ceil(geom.width_px / quad_px)) + 3
    ny = int(math.ceil(geom.height_px / quad_px)) + 3
    return (-float(quad_px), -float(quad_px)), nx, ny


def identity_grid(geom: ScreenGeometry, quad_px: float = 25, kernel: int = 5, **source) -> WarpGrid:
    origin, nx, ny = grid_layout(geom, quad_px)
    z = np.zeros((ny, nx))
    return WarpGrid(origin, float(quad_px), z, z.copy(), kernel, dict(source))


def smooth_field(d: np.ndarray, kernel: int) -> np.ndarray:
    """Normalised box filter with edge replication."""
    if kernel <= 1:
        return d.copy()
    return ndimage.uniform_filter(d, size=kernel, mode="nearest")


def build_grid(pairs: PointPairSet, geom: ScreenGeometry = DEFAULT_GEOMETRY,
               quad_px: float = 25, kernel: int = 5, **source) -> WarpGrid:
    """Evaluate the rigid-MLS warp at every grid vertex, then box-filter it."""
    origin, nx, ny = grid_layout(geom, quad_px)
    grid = WarpGrid(origin, float(quad_px), np.zeros((ny, nx)), np.zeros((ny, nx)), kernel, dict(source))
    if len(pairs) == 0:
        return grid
    verts = grid.vertices()
    disp = mls_rigid_map(pairs, verts) - verts
    dx = smooth_field(disp[:, 0].reshape(ny, nx), kernel)
    dy = smooth_field(disp[:, 1].reshape(ny, nx), kernel)
    return WarpGrid(origin, float(quad_px), dx, dy, kernel, dict(source))


def bilinear_weights(grid: WarpGrid, points) -> tuple[np.ndarray, np.ndarray]:
    """Flat corner indices (n, 4) and weights (n, 4) for bilinear lookup.

    Points outside the grid are clamped to its boundary quads.
    """
    pts = np.asarray(points, float).reshape(-1, 2)
    gx = np.clip((pts[:, 0] - grid.origin[0]) / grid.quad_px, 0.0, grid.nx - 1)
    gy = np.clip((pts[:, 1] - grid.origin[1]) / grid.quad_px, 0.0, grid.ny - 1)
    ix = np.minimum(np.floor(gx).astype(int), grid.nx - 2)
    iy = np.minimum(np.floor(gy).astype(int), grid.ny - 2)
    fx, fy = gx - ix, gy - iy
    base = iy * grid.nx + ix
    idx = np.column_stack([base, base + 1, base + grid.nx, base + grid.nx + 1])
    wts = np.column_stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy])
    return idx, wts


def apply(grid: WarpGrid, points) -> np.ndarray:
    """Move points by the bilinearly interpolated grid displacement.

    Accepts a single (2,) point or an (n, 2) array and returns the same shape.
    """
    arr = np.asarray(points, float)
    pts = arr.reshape(-1, 2)
    idx, wts = bilinear_weights(grid, pts)
    ddx = (grid.dx.ravel()[idx] * wts).sum(1)
    ddy = (grid.dy.ravel()[idx] * wts).sum(1)
    out = pts + np.column_stack([ddx, ddy])
    return out.reshape(arr.shape)


def select_saccades(saccades: Sequence[Saccade], selector, geom: ScreenGeometry, stimulus=None) -> list:
    if selector is None:
        return list(saccades)
    if not saccades:
        return []
    from .attributes import attribute_matrix

    keep = selector.predict(attribute_matrix(saccades, geom, stimulus)) == 1
    return [s for s, k in zip(saccades, keep) if k]


def calibrate(
    saccades: Sequence[Saccade],
    selector=None,
    mode=ProjectionMode.MIDDLE,
    geom: ScreenGeometry = DEFAULT_GEOMETRY,
    quad_px: float = 25,
    kernel: int = 5,
    stimulus=None,
) -> WarpGrid:
    """Select saccades, extract their point pairs and build the warp grid.

    Returns an identity grid (with ``source['status'] == 'no_saccades'``) and
    emits a warning when nothing survives selection.
    """
    mode = ProjectionMode.parse(mode)
    chosen = select_saccades(saccades, selector, geom, stimulus)
    source = {"mode": mode.value, "n_saccades": len(saccades), "n_selected": len(chosen)}
    if not chosen:
        warnings.warn("no saccades survived selection; returning identity warp", RuntimeWarning)
        return identity_grid(geom, quad_px, kernel, status="no_saccades", **source)
    pairs = PointPairSet.concat(extract_pairs(s, mode) for s in chosen)
    return build_grid(pairs, geom, quad_px, kernel, status="ok", **source)


class SaccadeWarpCalibrator(BaseEstimator, TransformerMixin):
    """Estimator form of :func:`calibrate`.

    ``fit`` takes a list of :class:`Saccade`; ``transform`` corrects an
    (n, 2) array of gaze points.
    """

    def __init__(self, mode="middle", quad_px=25, kernel=5, selector=None, geom=None):
        self.mode = mode
        self.quad_px = quad_px
        self.kernel = kernel
        self.selector = selector
        self.geom = geom

    def fit(self, saccades, y=None, stimulus=None):
        geom = self.geom or DEFAULT_GEOMETRY
        self.grid_ = calibrate(saccades, self.selector, self.mode, geom,
                               self.quad_px, self.kernel, stimulus)
        self.n_selected_ = self.grid_.source["n_selected"]
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("expected an (n, 2) array of gaze points")
        return apply(self.grid_, X)
