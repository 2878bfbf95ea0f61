"""Synthetic recording sessions with known ground truth.

Reproduces the shrinking-target protocol: targets on a 5x5 grid are visited
in random order (several traversals); each target is shown for two seconds
and the next one appears one second before the current one vanishes. The
eye jumps at each vanish after a randomly drawn latency, following a
minimum-jerk path whose peak velocity obeys a saturating main sequence.
Observed gaze is the true gaze passed through a smooth distortion field plus
Gaussian tracker noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .geometry import DEFAULT_GEOMETRY, ScreenGeometry, deg_to_px, px_to_deg
from .stream import GazeStream, SessionRecord, StimulusEvent, StimulusLog, TrueSaccade

# Mean pre-correction accuracy per head-pose condition, in degrees.
POSE_BASELINE_DEG = {"none": 1.07, "small": 1.17, "large": 1.18}
GRID_N = 5
APPEAR_INTERVAL_MS = 1000.0
SHOW_DURATION_MS = 2000.0

_POLY_TERMS = ((2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3))


@dataclass(frozen=True)
class SimConfig:
    traversals: int = 5
    rate_hz: float = 300.0
    noise_sd_deg: float = 0.1
    fixation_jitter_deg: float = 0.03
    natural_curve_fraction: float = 0.0
    curve_amp_deg: tuple = (0.3, 1.0)
    pose_label: str = "none"
    magnitude_deg: Optional[float] = None  # None: use POSE_BASELINE_DEG
    distortion: str = "smooth"  # smooth | translation | identity
    translation_px: tuple = (30.0, 0.0)
    rng_seed: int = 0
    field_seed: Optional[int] = None
    geom: ScreenGeometry = DEFAULT_GEOMETRY
    main_sequence_eta: float = 600.0  # deg/s, saturation velocity
    main_sequence_c: float = 10.0  # deg
    session_id: str = "s0"
    participant_id: str = "p0"

    def __post_init__(self):
        if self.traversals < 1:
            raise ValueError("traversals must be >= 1")
        if not 0 <= self.natural_curve_fraction <= 1:
            raise ValueError("natural_curve_fraction must be in [0, 1]")
        if self.noise_sd_deg < 0 or self.fixation_jitter_deg < 0:
            raise ValueError("noise levels must be >= 0")
        if self.distortion not in ("smooth", "translation", "identity"):
            raise ValueError(f"unknown distortion {self.distortion!r}")
        if self.pose_label not in POSE_BASELINE_DEG:
            raise ValueError(f"unknown pose_label {self.pose_label!r}")

    @property
    def target_magnitude_deg(self) -> float:
        return POSE_BASELINE_DEG[self.pose_label] if self.magnitude_deg is None else self.magnitude_deg


class DistortionField:
    """Smooth map from true to observed screen coordinates.

    ``D(p) = p + translation + scale * shape(u)`` with ``u = (p - center) / radius``.
    The shape is a radial cubic term plus random quadratic/cubic monomials,
    Gaussian bumps and a small affine part.
    """

    def __init__(self, center=(0.0, 0.0), radius=1.0, radial=0.0, poly=None,
                 bumps=(), affine=None, offset=(0.0, 0.0), scale=0.0,
                 translation=(0.0, 0.0), kind="smooth"):
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.radial = float(radial)
        self.poly = np.zeros((len(_POLY_TERMS), 2)) if poly is None else np.asarray(poly, float)
        self.bumps = [(np.asarray(c, float), float(s), np.asarray(a, float)) for c, s, a in bumps]
        self.affine = np.zeros((2, 2)) if affine is None else np.asarray(affine, float)
        self.offset = np.asarray(offset, float)
        self.scale = float(scale)
        self.translation = np.asarray(translation, float)
        self.kind = kind

    @classmethod
    def identity(cls) -> "DistortionField":
        return cls(kind="identity")

    @classmethod
    def pure_translation(cls, t) -> "DistortionField":
        return cls(translation=t, kind="translation")

    @classmethod
    def random(cls, geom: ScreenGeometry, rng: np.random.Generator) -> "DistortionField":
        """Random shape with unit scale; the caller sets ``scale``."""
        w, h = geom.width_px, geom.height_px
        radius = 0.5 * math.hypot(w, h)
        center = np.array([w / 2, h / 2]) + rng.normal(0, 0.03, 2) * [w, h]
        radial = rng.choice([-1.0, 1.0]) * rng.uniform(0.8, 1.2)
        poly = rng.normal(0, 0.25, (len(_POLY_TERMS), 2))
        bumps = []
        for _ in range(2):
            c = rng.uniform(-0.6, 0.6, 2) * [w / radius, h / radius]
            bumps.append((c, rng.uniform(0.25, 0.4), rng.normal(0, 0.1, 2)))
        affine = rng.normal(0, 0.05, (2, 2))
        offset = rng.normal(0, 0.03, 2)
        return cls(center, radius, radial, poly, bumps, affine, offset, 1.0)

    def shape(self, points) -> np.ndarray:
        p = np.asarray(points, float).reshape(-1, 2)
        u = (p - self.center) / self.radius
        ux, uy = u[:, 0], u[:, 1]
        r2 = ux * ux + uy * uy
        out = self.radial * u * r2[:, None]
        for (i, j), coef in zip(_POLY_TERMS, self.poly):
            out += np.outer(ux ** i * uy ** j, coef)
        for c, s, a in self.bumps:
            g = np.exp(-((ux - c[0]) ** 2 + (uy - c[1]) ** 2) / (2 * s * s))
            out += np.outer(g, a)
        out += u @ self.affine.T + self.offset
        return out * self.radius

    def displacement(self, points) -> np.ndarray:
        p = np.asarray(points, float).reshape(-1, 2)
        d = np.broadcast_to(self.translation, p.shape).copy()
        if self.kind == "smooth" and self.scale != 0:
            d += self.scale * self.shape(p)
        return d

    def __call__(self, points) -> np.ndarray:
        arr = np.asarray(points, float)
        p = arr.reshape(-1, 2)
        return (p + self.displacement(p)).reshape(arr.shape)

    def jacobian(self, points, h: float = 1e-3) -> np.ndarray:
        """Central-difference Jacobian, shape (n, 2, 2)."""
        p = np.asarray(points, float).reshape(-1, 2)
        J = np.empty((len(p), 2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            J[:, :, k] = (self(p + e) - self(p - e)) / (2 * h)
        return J

    def min_jacobian_det(self, geom: ScreenGeometry, n: int = 64) -> float:
        xs = np.linspace(0, geom.width_px, n)
        ys = np.linspace(0, geom.height_px, n)
        gx, gy = np.meshgrid(xs, ys)
        J = self.jacobian(np.column_stack([gx.ravel(), gy.ravel()]))
        return float(np.min(np.linalg.det(J)))

    def inverse(self, observed, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
        """Numerically invert the field by Newton iteration."""
        arr = np.asarray(observed, float)
        y = arr.reshape(-1, 2)
        x = y - self.displacement(y)
        for _ in range(max_iter):
            r = self(x) - y
            if np.max(np.abs(r)) < tol:
                break
            J = self.jacobian(x)
            x = x - np.linalg.solve(J, r[..., None])[..., 0]
        return x.reshape(arr.shape)

    def to_dict(self) -> dict:
        return {
            "schema_version": "1.0",
            "kind": self.kind,
            "center": self.center.tolist(),
            "radius": self.radius,
            "radial": self.radial,
            "poly": self.poly.tolist(),
            "bumps": [{"center": c.tolist(), "sigma": s, "amplitude": a.tolist()} for c, s, a in self.bumps],
            "affine": self.affine.tolist(),
            "offset": self.offset.tolist(),
            "scale": self.scale,
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DistortionField":
        if int(str(d.get("schema_version", "0")).split(".")[0]) > 1:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')}")
        return cls(
            center=d["center"], radius=d["radius"], radial=d["radial"], poly=d["poly"],
            bumps=[(b["center"], b["sigma"], b["amplitude"]) for b in d["bumps"]],
            affine=d["affine"], offset=d["offset"], scale=d["scale"],
            translation=d["translation"], kind=d["kind"],
        )


def latency_model(rng: np.random.Generator, size=None, mean=200.0, sd=50.0, lo=80.0, hi=400.0):
    """Saccade onset latency after target vanish (ms), truncated normal."""
    a, b = (lo - mean) / sd, (hi - mean) / sd
    out = stats.truncnorm.rvs(a, b, loc=mean, scale=sd, size=size, random_state=rng)
    return float(out) if size is None else out


def grid_targets(geom: ScreenGeometry, n: int = GRID_N) -> np.ndarray:
    """Target positions, shape (n, n, 2), indexed [row, col]."""
    xs = (np.arange(n) + 0.5) * geom.width_px / n
    ys = (np.arange(n) + 0.5) * geom.height_px / n
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


def target_order(rng: np.random.Generator, traversals: int, n: int = GRID_N) -> list[tuple[int, int]]:
    """Random traversal order of the grid, never repeating a target back to back."""
    order: list[int] = []
    for _ in range(traversals):
        perm = list(rng.permutation(n * n))
        if order and perm[0] == order[-1]:
            perm[0], perm[-1] = perm[-1], perm[0]
        order.extend(perm)
    return [divmod(int(k), n) for k in order]


def minimum_jerk(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 3 * (10 - 15 * tau + 6 * tau * tau)


def main_sequence_duration_ms(amplitude_deg: float, eta: float = 600.0, c: float = 10.0) -> float:
    """Duration of a minimum-jerk saccade whose peak velocity is eta * (1 - exp(-A / c))."""
    vpeak = eta * (1.0 - math.exp(-amplitude_deg / c))
    return 1000.0 * 1.875 * amplitude_deg / vpeak


def _truth(cfg: SimConfig, rng: np.random.Generator):
    geom = cfg.geom
    targets = grid_targets(geom)
    order = target_order(rng, cfg.traversals)
    k_targets = len(order)

    events = []
    for k, (r, c) in enumerate(order):
        x, y = targets[r, c]
        t0 = k * APPEAR_INTERVAL_MS
        events.append(StimulusEvent(t0, "appear", float(x), float(y), r, c))
        events.append(StimulusEvent(t0 + SHOW_DURATION_MS, "vanish", float(x), float(y), r, c))
    stimulus = StimulusLog(tuple(events))

    dt = 1000.0 / cfg.rate_hz
    t_end = (k_targets - 1) * APPEAR_INTERVAL_MS + SHOW_DURATION_MS
    t = np.arange(0.0, t_end, dt)
    n = len(t)

    n_sacc = k_targets - 1
    n_curved = int(round(cfg.natural_curve_fraction * n_sacc))
    curved = np.zeros(n_sacc, dtype=bool)
    curved[rng.choice(n_sacc, n_curved, replace=False)] = True

    xy = np.empty((n, 2))
    current = np.zeros(n, dtype=int)  # index into order of the fixated/departed target
    in_sacc = np.zeros(n, dtype=bool)
    true_saccades = []
    pos = 0
    for k in range(n_sacc):
        a = targets[order[k]]
        b = targets[order[k + 1]]
        onset = k * APPEAR_INTERVAL_MS + SHOW_DURATION_MS + latency_model(rng)
        amp_deg = px_to_deg(float(np.hypot(*(b - a))), geom)
        dur = main_sequence_duration_ms(amp_deg, cfg.main_sequence_eta, cfg.main_sequence_c)
        bump = 0.0
        if curved[k]:
            bump = rng.choice([-1.0, 1.0]) * deg_to_px(rng.uniform(*cfg.curve_amp_deg), geom)
        i0 = int(np.searchsorted(t, onset))
        i1 = int(np.searchsorted(t, onset + dur))
        xy[pos:i0] = a
        current[pos:i0] = k
        tau = (t[i0:i1] - onset) / dur
        s = minimum_jerk(tau)
        chord = b - a
        normal = np.array([-chord[1], chord[0]]) / np.hypot(*chord)
        xy[i0:i1] = a + s[:, None] * chord + (bump * np.sin(np.pi * s))[:, None] * normal
        current[i0:i1] = k
        in_sacc[i0:i1] = True
        true_saccades.append(TrueSaccade(float(onset), float(onset + dur), tuple(a), tuple(b), bool(curved[k]), float(bump)))
        pos = i1
    xy[pos:] = targets[order[-1]]
    current[pos:] = n_sacc

    if cfg.fixation_jitter_deg > 0:
        jit = rng.normal(0.0, deg_to_px(cfg.fixation_jitter_deg, geom), (n, 2))
        xy[~in_sacc] += jit[~in_sacc]
    fix_targets = np.array([targets[order[k]] for k in current])
    return t, xy, stimulus, true_saccades, in_sacc, fix_targets


def make_field(cfg: SimConfig) -> DistortionField:
    if cfg.distortion == "identity":
        return DistortionField.identity()
    if cfg.distortion == "translation":
        return DistortionField.pure_translation(cfg.translation_px)
    seed = cfg.field_seed if cfg.field_seed is not None else cfg.rng_seed + 7919
    return DistortionField.random(cfg.geom, np.random.default_rng(seed))


def _fixation_mask(in_sacc: np.ndarray, margin: int) -> np.ndarray:
    """Samples at least ``margin`` samples away from any saccade sample."""
    near = np.convolve(in_sacc.astype(float), np.ones(2 * margin + 1), mode="same") > 0
    return ~near


def _calibrate_scale(cfg, t, truth, noise, in_sacc, fix_targets, field) -> float:
    """Field scale at which the filtered fixation samples hit the target accuracy."""
    from .preprocess import lowpass

    geom = cfg.geom
    valid = np.ones(len(t), bool)

    def filt(xy):
        return lowpass(GazeStream(t, xy, valid, cfg.rate_hz, geom)).xy

    base = filt(truth + noise)
    shape = filt(field.shape(truth))
    mask = _fixation_mask(in_sacc, margin=int(round(0.04 * cfg.rate_hz)))
    base, shape, tgt = base[mask], shape[mask], fix_targets[mask]
    goal = cfg.target_magnitude_deg

    def err(scale):
        d = np.hypot(*(base + scale * shape - tgt).T)
        return float(np.mean(px_to_deg(d, geom))) - goal

    lo, hi = 0.0, 0.01
    if err(lo) >= 0:
        return 0.0
    while err(hi) < 0:
        hi *= 2.0
        if hi > 10:
            raise RuntimeError("could not reach the requested distortion magnitude")
    return optimize.brentq(err, lo, hi, xtol=1e-12)


def generate_session(cfg: SimConfig = SimConfig()) -> SessionRecord:
    rng = np.random.default_rng(cfg.rng_seed)
    t, truth, stimulus, true_saccades, in_sacc, fix_targets = _truth(cfg, rng)
    geom = cfg.geom
    if cfg.noise_sd_deg > 0:
        noise = rng.normal(0.0, deg_to_px(cfg.noise_sd_deg, geom), truth.shape)
    else:
        noise = np.zeros_like(truth)

    field = make_field(cfg)
    if field.kind == "smooth":
        field.scale = _calibrate_scale(cfg, t, truth, noise, in_sacc, fix_targets, field)
        if field.min_jacobian_det(geom) <= 0:
            raise RuntimeError("distortion field folds over; lower its magnitude")

    observed = field(truth) + noise
    valid = np.ones(len(t), dtype=bool)
    return SessionRecord(
        stream=GazeStream(t, observed, valid, cfg.rate_hz, geom),
        stimulus=stimulus,
        geom=geom,
        truth_stream=GazeStream(t, truth, valid, cfg.rate_hz, geom),
        distortion=field,
        pose_label=cfg.pose_label,
        session_id=cfg.session_id,
        participant_id=cfg.participant_id,
        true_saccades=true_saccades,
    )


POSES = ("none", "small", "large")


def generate_suite(n_participants: int = 10, base: SimConfig = SimConfig(), seed: int = 0,
                   poses=POSES) -> dict:
    """Sessions grouped by participant id; each participant has its own fields per pose."""
    suite = {}
    ss = np.random.SeedSequence(seed)
    for i, child in enumerate(ss.spawn(n_participants)):
        pid = f"p{i:02d}"
        seeds = child.generate_state(2 * len(poses))
        sessions = []
        for j, pose in enumerate(poses):
            cfg = replace(base, pose_label=pose, rng_seed=int(seeds[2 * j]),
                          field_seed=int(seeds[2 * j + 1]), session_id=f"s{j}_{pose}",
                          participant_id=pid)
            sessions.append(generate_session(cfg))
        suite[pid] = sessions
    return suite
