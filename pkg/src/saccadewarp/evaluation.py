"""Accuracy and improvement metrics against the stimulus ground truth."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import ScreenGeometry, px_to_deg
from .segmentation import Fixation
from .stream import GazeStream, SessionRecord, StimulusLog
from .warpfield import (
    WarpGrid,
    apply,
    bilinear_weights,
    extract_pairs,
    grid_layout,
    mls_moments,
    moments_to_displacement,
)

GRID_N = 5


def associate_fixations(stimulus: StimulusLog, fixations: Sequence[Fixation]) -> list:
    """Target epoch for each fixation.

    The epoch whose appear-vanish interval covers the fixation midpoint wins;
    when several do (the next target is already visible), the earliest shown
    one is the one being looked at. Otherwise the epoch nearest in time.
    """
    epochs = stimulus.epochs()
    if not epochs:
        return [None] * len(fixations)
    appear = np.array([e.appear_t for e in epochs])
    vanish = np.array([e.vanish_t for e in epochs])
    out = []
    for f in fixations:
        mid = f.mid_t
        covering = np.flatnonzero((appear <= mid) & (mid <= vanish))
        if len(covering):
            out.append(epochs[covering[np.argmin(appear[covering])]])
        else:
            gap = np.maximum(appear - mid, mid - vanish)
            out.append(epochs[int(np.argmin(gap))])
    return out


@dataclass
class FixationPoints:
    """Gaze samples of associated fixations with their ground-truth targets."""

    points: np.ndarray  # (n, 2)
    targets: np.ndarray  # (n, 2)
    cells: np.ndarray  # (n, 2) row, col
    n_fixations: int


def fixation_points(stimulus: StimulusLog, fixations: Sequence[Fixation], stream: GazeStream) -> FixationPoints:
    pts, tgts, cells = [], [], []
    n = 0
    for f, ep in zip(fixations, associate_fixations(stimulus, fixations)):
        if ep is None:
            continue
        sl = slice(f.start_idx, f.end_idx + 1)
        xy = stream.xy[sl][stream.valid[sl]]
        if not len(xy):
            continue
        n += 1
        pts.append(xy)
        tgts.append(np.broadcast_to([ep.x, ep.y], xy.shape))
        cells.append(np.broadcast_to([ep.row, ep.col], xy.shape))
    if not n:
        raise ValueError("no fixation could be associated with a target")
    return FixationPoints(np.vstack(pts), np.vstack(tgts).astype(float), np.vstack(cells).astype(int), n)


def _nan_to_none(a):
    return [[None if (v is None or math.isnan(v)) else float(v) for v in row] for row in np.asarray(a, float)]


def _none_to_nan(a):
    return np.array([[np.nan if v is None else v for v in row] for row in a], dtype=float)


@dataclass
class AccuracyReport:
    mean_error_deg: float
    sd_error_deg: float
    per_vertex_error: np.ndarray  # (5, 5), NaN where no fixation
    per_vertex_count: np.ndarray  # (5, 5) gaze points per cell
    n_fixations: int
    n_points: int

    def to_dict(self) -> dict:
        return {
            "mean_error_deg": self.mean_error_deg,
            "sd_error_deg": self.sd_error_deg,
            "per_vertex_error": _nan_to_none(self.per_vertex_error),
            "per_vertex_count": np.asarray(self.per_vertex_count).astype(int).tolist(),
            "n_fixations": self.n_fixations,
            "n_points": self.n_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AccuracyReport":
        return cls(float(d["mean_error_deg"]), float(d["sd_error_deg"]), _none_to_nan(d["per_vertex_error"]),
                   np.array(d["per_vertex_count"], dtype=int), int(d["n_fixations"]), int(d["n_points"]))


def _report(errors: np.ndarray, cells: np.ndarray, n_fix: int) -> AccuracyReport:
    per = np.full((GRID_N, GRID_N), np.nan)
    count = np.zeros((GRID_N, GRID_N), dtype=int)
    flat = cells[:, 0] * GRID_N + cells[:, 1]
    np.add.at(count.ravel(), flat, 1)
    sums = np.zeros(GRID_N * GRID_N)
    np.add.at(sums, flat, errors)
    has = count.ravel() > 0
    per.ravel()[has] = sums[has] / count.ravel()[has]
    return AccuracyReport(float(errors.mean()), float(errors.std()), per, count, n_fix, len(errors))


def point_errors(fp: FixationPoints, geom: ScreenGeometry, warp: Optional[WarpGrid] = None) -> np.ndarray:
    pts = fp.points if warp is None else apply(warp, fp.points)
    return px_to_deg(np.hypot(*(pts - fp.targets).T), geom)


def accuracy(session: SessionRecord, fixations: Sequence[Fixation], warp: Optional[WarpGrid] = None,
             stream: Optional[GazeStream] = None) -> AccuracyReport:
    """Mean visual-angle error between fixation gaze points and their targets.

    ``stream`` is the stream the fixations were segmented from (defaults to
    the session's raw stream). With ``warp`` every gaze point is corrected
    first.
    """
    fp = fixation_points(session.stimulus, fixations, stream if stream is not None else session.stream)
    return _report(point_errors(fp, session.geom, warp), fp.cells, fp.n_fixations)


@dataclass
class ImprovementReport:
    before: AccuracyReport
    after: AccuracyReport
    improvement_pct: float
    region_map: np.ndarray  # (5, 5) error reduction in degrees, NaN where empty
    region_pct: np.ndarray  # (5, 5) per-cell improvement in percent

    def to_dict(self) -> dict:
        return {
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
            "improvement_pct": self.improvement_pct,
            "region_map": _nan_to_none(self.region_map),
            "region_pct": _nan_to_none(self.region_pct),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImprovementReport":
        return cls(AccuracyReport.from_dict(d["before"]), AccuracyReport.from_dict(d["after"]),
                   float(d["improvement_pct"]), _none_to_nan(d["region_map"]), _none_to_nan(d["region_pct"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def improvement_from_reports(before: AccuracyReport, after: AccuracyReport) -> ImprovementReport:
    pct = 100.0 * (before.mean_error_deg - after.mean_error_deg) / before.mean_error_deg
    region = before.per_vertex_error - after.per_vertex_error
    with np.errstate(invalid="ignore", divide="ignore"):
        region_pct = 100.0 * region / before.per_vertex_error
    return ImprovementReport(before, after, float(pct), region, region_pct)


def improvement(session: SessionRecord, warp: WarpGrid, fixations: Sequence[Fixation],
                stream: Optional[GazeStream] = None) -> ImprovementReport:
    before = accuracy(session, fixations, None, stream)
    after = accuracy(session, fixations, warp, stream)
    return improvement_from_reports(before, after)


def pooled_improvement(pairs_of_errors: Sequence[tuple]) -> float:
    """Improvement percent over all gaze points pooled across sessions.

    Takes (before_errors, after_errors) arrays per session.
    """
    b = np.concatenate([p[0] for p in pairs_of_errors])
    a = np.concatenate([p[1] for p in pairs_of_errors])
    return float(100.0 * (b.mean() - a.mean()) / b.mean())


class SubsetAccuracy:
    """Session accuracy after correcting with an arbitrary subset of saccades.

    Callable with a boolean mask over ``saccades``; returns the mean error in
    degrees that :func:`calibrate` followed by :func:`accuracy` would give.
    Per-saccade MLS moments are precomputed on just the grid vertices the
    fixation points depend on, so a subset costs one moment sum.
    """

    def __init__(self, saccades, fixation_pts: FixationPoints, geom: ScreenGeometry,
                 mode="middle", quad_px: float = 25, kernel: int = 5):
        if kernel % 2 == 0:
            raise ValueError("kernel must be odd")
        self.n = len(saccades)
        self.geom = geom
        self.fp = fixation_pts
        origin, nx, ny = grid_layout(geom, quad_px)
        grid = WarpGrid(origin, float(quad_px), np.zeros((ny, nx)), np.zeros((ny, nx)), kernel)
        idx, self.wts = bilinear_weights(grid, fixation_pts.points)
        corners, corner_inv = np.unique(idx, return_inverse=True)
        self.corner_inv = corner_inv.reshape(idx.shape)
        r = kernel // 2
        cy, cx = np.divmod(corners, nx)
        offs = np.arange(-r, r + 1)
        ny_idx = np.clip(cy[:, None, None] + offs[None, :, None], 0, ny - 1)
        nx_idx = np.clip(cx[:, None, None] + offs[None, None, :], 0, nx - 1)
        neigh = (ny_idx * nx + nx_idx).reshape(len(corners), -1)
        needed, neigh_inv = np.unique(neigh, return_inverse=True)
        self.neigh_inv = neigh_inv.reshape(neigh.shape)
        verts = grid.vertices()[needed]
        self.moments = np.stack([mls_moments(extract_pairs(s, mode), verts) for s in saccades]) \
            if self.n else np.zeros((0, len(verts), 11))
        self._base_mask = None
        self._base_total = None

    def _total(self, mask: np.ndarray) -> np.ndarray:
        if not mask.any():
            return np.zeros(self.moments.shape[1:])
        # small moment sums are recomputed: subtracting down to them leaves round-off, not zero
        if self._base_mask is not None and mask.sum() > 2:
            diff = np.flatnonzero(mask != self._base_mask)
            if len(diff) <= 2:
                total = self._base_total.copy()
                for k in diff:
                    total += self.moments[k] if mask[k] else -self.moments[k]
                return total
        total = self.moments[mask].sum(0) if mask.any() else np.zeros(self.moments.shape[1:])
        self._base_mask = mask.copy()
        self._base_total = total
        return total

    def errors(self, mask) -> np.ndarray:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n,):
            raise ValueError("mask length must equal the number of saccades")
        disp = moments_to_displacement(self._total(mask))
        smooth = disp[self.neigh_inv].mean(axis=1)
        d = (smooth[self.corner_inv] * self.wts[..., None]).sum(axis=1)
        pts = self.fp.points + d
        return px_to_deg(np.hypot(*(pts - self.fp.targets).T), self.geom)

    def __call__(self, mask) -> float:
        return float(self.errors(mask).mean())
